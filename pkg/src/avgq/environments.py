"""Concrete models: the case-study control problem, the halving counterexample,
explicit finite models, and a few simple chains used as test oracles."""

from __future__ import annotations

import numpy as np

from .core import ContinuousModel, FiniteModel, Minorization, bin_index

CASE_STUDY_ACTIONS = (-1.0, 0.0, 1.0)
CASE_STUDY_FINE_ACTIONS = (-1.0, -0.5, 0.0, 0.5, 1.0)
JUMP_PROB = 0.9
RESET_PROB = 0.1


def case_study_cost(x, u):
    return 0.7 * (1.0 - np.asarray(x, dtype=float)) + 0.2 * (np.asarray(u, dtype=float) + 1.0)


def _reachable(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lo = np.where(u > 0, x, np.maximum(x + u, 0.0))
    hi = np.where(u > 0, np.minimum(x + u, 1.0), x)
    return lo, hi


def case_study_sampler(x, u, rng):
    if np.ndim(x) == 0 and np.ndim(u) == 0:
        # scalar path for single-trajectory learners
        x = float(x)
        u = float(u)
        if rng.random() < JUMP_PROB:
            lo, hi = (x, min(x + u, 1.0)) if u > 0 else (max(x + u, 0.0), x)
            return lo + (hi - lo) * rng.random()
        return rng.random()
    lo, hi = _reachable(x, u)
    shape = lo.shape
    jump = rng.random(shape) < JUMP_PROB
    r = rng.random(shape)
    reset = rng.random(shape)
    return np.where(jump, lo + (hi - lo) * r, reset)


def case_study_bin_kernel(x, u, edges):
    """Exact bin masses of the case-study kernel, shape ``x.shape + (M,)``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = _reachable(x, u)
    lo, hi = np.broadcast_arrays(lo, hi)
    a, b = edges[:-1], edges[1:]
    length = (hi - lo)[..., None]
    overlap = np.clip(np.minimum(hi[..., None], b) - np.maximum(lo[..., None], a), 0.0, None)
    safe = np.where(length > 0, length, 1.0)
    spread = np.where(length > 0, overlap / safe, 0.0)
    # Degenerate reachable interval: point mass at x, in the bin holding x.
    point = np.zeros_like(spread)
    degenerate = (hi - lo) <= 0
    if np.any(degenerate):
        xb = np.broadcast_to(np.asarray(x, dtype=float), lo.shape)
        idx = bin_index(edges, xb)
        np.put_along_axis(point, idx[..., None], 1.0, axis=-1)
        point *= degenerate[..., None]
    return JUMP_PROB * (spread + point) + RESET_PROB * (b - a)


def case_study_kernel_breakpoints(u, edges):
    edges = np.asarray(edges, dtype=float)
    return np.concatenate([edges - u, edges])


def case_study_kernel_mass(x: float, u: float, interval) -> float:
    """Exact probability that the case-study chain moves from ``x`` into ``interval``.

    ``interval = (lo, hi)`` is read as ``[lo, hi)``, or ``[lo, 1]`` when
    ``hi == 1``.
    """
    lo_b, hi_b = map(float, interval)
    if not (0.0 <= lo_b <= hi_b <= 1.0):
        raise ValueError("interval must lie inside [0, 1]")
    if not (0.0 <= x <= 1.0 and -1.0 <= u <= 1.0):
        raise ValueError("(x, u) outside the case-study domain")
    lo, hi = _reachable(x, u)
    lo, hi = float(lo), float(hi)
    if hi > lo:
        inner = max(0.0, min(hi, hi_b) - max(lo, lo_b)) / (hi - lo)
    else:
        inner = 1.0 if (lo_b <= x < hi_b or x == hi_b == 1.0) else 0.0
    return JUMP_PROB * inner + RESET_PROB * (hi_b - lo_b)


def case_study_lipschitz_constants() -> tuple[float, float]:
    """Cost and Wasserstein-1 kernel Lipschitz constants ``(K_c, K_f)``."""
    return 0.7, 0.9


def case_study(actions=CASE_STUDY_ACTIONS) -> ContinuousModel:
    """The scalar control problem on ``X = [0, 1]``, ``U = [-1, 1]``."""
    return ContinuousModel(
        name="case_study",
        state_bounds=(0.0, 1.0),
        cost=case_study_cost,
        sampler=case_study_sampler,
        cost_bound=1.1,
        actions=tuple(float(a) for a in actions) if actions is not None else None,
        action_interval=(-1.0, 1.0),
        bin_kernel=case_study_bin_kernel,
        minorization=Minorization(mass=RESET_PROB, measure=lambda lo, hi: RESET_PROB * (hi - lo)),
        kernel_breakpoints=case_study_kernel_breakpoints,
        params={"actions": list(actions) if actions is not None else None},
    )


def _point_mass_kernel(step):
    def kernel(x, u, edges):
        nxt = np.broadcast_to(step(np.asarray(x, dtype=float)), np.broadcast(x, u).shape)
        out = np.zeros(nxt.shape + (len(edges) - 1,))
        np.put_along_axis(out, bin_index(edges, nxt)[..., None], 1.0, axis=-1)
        return out
    return kernel


def halving() -> ContinuousModel:
    """Uncontrolled ``X_{t+1} = X_t / 2`` on ``[-1, 1]`` with cost ``c(x) = x``.

    Carries no minorization certificate: it exists to show what goes wrong
    without one.
    """
    step = lambda x: x / 2.0  # noqa: E731
    return ContinuousModel(
        name="halving",
        state_bounds=(-1.0, 1.0),
        cost=lambda x, u: np.asarray(x, dtype=float) + 0.0 * np.asarray(u, dtype=float),
        sampler=lambda x, u, rng: np.broadcast_to(step(np.asarray(x, dtype=float)),
                                                 np.broadcast(x, u).shape).copy()
        if np.ndim(x) or np.ndim(u) else float(x) / 2.0,
        cost_bound=1.0,
        actions=(0.0,),
        bin_kernel=_point_mass_kernel(step),
    )


def linear_map(k: float) -> ContinuousModel:
    """Uncontrolled deterministic ``X_{t+1} = k X_t`` on ``[0, 1]`` with cost ``x``."""
    if not 0.0 <= k <= 1.0:
        raise ValueError("k must lie in [0, 1]")
    step = lambda x: k * x  # noqa: E731
    return ContinuousModel(
        name="linear_map",
        state_bounds=(0.0, 1.0),
        cost=lambda x, u: np.asarray(x, dtype=float) + 0.0 * np.asarray(u, dtype=float),
        sampler=lambda x, u, rng: np.broadcast_to(step(np.asarray(x, dtype=float)),
                                                 np.broadcast(x, u).shape).copy()
        if np.ndim(x) or np.ndim(u) else k * float(x),
        cost_bound=1.0,
        actions=(0.0,),
        bin_kernel=_point_mass_kernel(step),
        params={"k": k},
    )


def iid_uniform(cost_level: float = 0.5) -> ContinuousModel:
    """Next state ``~ Unif[0, 1]`` regardless of ``(x, u)``; constant cost."""
    def sampler(x, u, rng):
        if np.ndim(x) == 0 and np.ndim(u) == 0:
            return rng.random()
        return rng.random(np.broadcast(x, u).shape)

    def kernel(x, u, edges):
        shape = np.broadcast(x, u).shape
        return np.broadcast_to(np.diff(np.asarray(edges, dtype=float)), shape + (len(edges) - 1,))

    return ContinuousModel(
        name="iid_uniform",
        state_bounds=(0.0, 1.0),
        cost=lambda x, u: cost_level + 0.0 * (np.asarray(x, dtype=float) + np.asarray(u, dtype=float)),
        sampler=sampler,
        cost_bound=abs(cost_level),
        actions=(0.0,),
        bin_kernel=kernel,
        # mu = Unif[0,1] itself; its mass is one, the i.i.d. extreme.
        minorization=Minorization(mass=1.0, measure=lambda lo, hi: hi - lo),
        params={"cost_level": cost_level},
    )


def synthetic_finite(cost, kernel, floor=None) -> ContinuousModel:
    """Wrap an explicit finite MDP as a model on the states ``0, ..., M-1``.

    Actions are the indices ``0, ..., K-1``.
    """
    fm = FiniteModel(cost, kernel, floor)
    fm.validate()
    C, P = fm.cost, fm.kernel
    M, K = C.shape
    cum = np.cumsum(P, axis=2)
    cum[..., -1] = 1.0
    support = np.arange(M, dtype=float)

    def state_action(x, u):
        xi = np.rint(np.asarray(x, dtype=float)).astype(int)
        ui = np.rint(np.asarray(u, dtype=float)).astype(int)
        return np.broadcast_arrays(xi, ui)

    def cost_fn(x, u):
        xi, ui = state_action(x, u)
        return C[xi, ui]

    def sampler(x, u, rng):
        xi, ui = state_action(x, u)
        r = rng.random(xi.shape)
        nxt = (cum[xi, ui] < r[..., None]).sum(axis=-1).astype(float)
        return float(nxt) if nxt.ndim == 0 else nxt

    def bin_kernel(x, u, edges):
        xi, ui = state_action(x, u)
        agg = np.zeros((M, len(edges) - 1))
        agg[np.arange(M), bin_index(np.asarray(edges, dtype=float), support)] = 1.0
        return P[xi, ui] @ agg

    minor = None
    if fm.floor.sum() > 0:
        minor = Minorization(mass=float(fm.floor.sum()), point_masses=tuple(fm.floor))
    return ContinuousModel(
        name="synthetic_finite",
        state_bounds=(-0.5, M - 0.5),
        cost=cost_fn,
        sampler=sampler,
        cost_bound=float(np.max(np.abs(C))),
        actions=tuple(float(k) for k in range(K)),
        bin_kernel=bin_kernel,
        minorization=minor,
        support=tuple(support),
        params={"cost": C.tolist(), "kernel": P.tolist(), "floor": fm.floor.tolist()},
    )


def random_finite_model(num_states: int, num_actions: int, rng, min_floor: float = 0.05,
                        max_floor: float = 0.1) -> FiniteModel:
    """Random finite MDP whose kernel dominates a random per-state floor."""
    rng = np.random.default_rng(rng)
    floor = rng.uniform(min_floor, max_floor, size=num_states)
    if floor.sum() >= 1.0:
        raise ValueError("floor mass must stay below one")
    rest = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    kernel = floor + (1.0 - floor.sum()) * rest
    cost = rng.random((num_states, num_actions))
    return FiniteModel(cost, kernel, floor, action_values=np.arange(num_actions, dtype=float))


MODEL_FACTORIES = {
    "case_study": case_study,
    "halving": halving,
    "synthetic_finite": synthetic_finite,
    "linear_map": linear_map,
    "iid_uniform": iid_uniform,
}


def make_model(name: str, **params) -> ContinuousModel:
    try:
        factory = MODEL_FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_FACTORIES)}") from None
    return factory(**params)
