"""Exact solution of the average cost optimality equation on finite models.

Two independent contraction routes are provided: relative value iteration,
which contracts in the span semi-norm when the kernel rows are uniformly
close in total variation, and value iteration on the floor-subtracted kernel,
which contracts in the sup norm under a minorization floor.  Brute-force
policy enumeration and a vanishing-discount check serve as oracles.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted
from .core import (
    ACOESolution,
    AssumptionError,
    ConvergenceError,
    FiniteModel,
    acoe_residual,
    greedy,
    span,
)

logger = logging.getLogger(__name__)

ROUTES = ("span_rvi", "shifted_kernel")


@dataclass
class SolverConfig:
    route: str = "shifted_kernel"
    tolerance: float = 1e-10
    max_iters: int = 1_000_000
    reference_state: int = 0
    floor_override: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ValueError(f"route must be one of {ROUTES}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def tv_coefficient(model: FiniteModel, block: int = 256) -> float:
    """Largest half-L1 distance between any two kernel rows."""
    rows = model.kernel.reshape(-1, model.num_states)
    worst = 0.0
    for start in range(0, len(rows), block):
        chunk = rows[start:start + block]
        d = 0.5 * np.abs(chunk[:, None, :] - rows[None, :, :]).sum(axis=2)
        worst = max(worst, float(d.max()))
    return worst


def bellman_operator(model: FiniteModel, h: np.ndarray) -> np.ndarray:
    """``(T h)(y) = min_u [C(y,u) + sum_z P(z|y,u) h(z)]``."""
    return model.bellman(h).min(axis=1)


def shifted_operator(model: FiniteModel, f: np.ndarray, floor=None) -> np.ndarray:
    """Bellman operator with the floor measure removed from the kernel."""
    floor = model.floor if floor is None else floor
    return (model.bellman(f) - floor @ f).min(axis=1)


def solve_span_rvi(model: FiniteModel, cfg: Optional[SolverConfig] = None) -> ACOESolution:
    """Relative value iteration ``h <- T h - (T h)(z)`` from ``h = 0``."""
    cfg = cfg or SolverConfig(route="span_rvi")
    z = cfg.reference_state
    if not 0 <= z < model.num_states:
        raise ValueError("reference_state out of range")
    beta = tv_coefficient(model)
    if beta >= 1.0:
        raise AssumptionError(
            f"span contraction certificate fails: TV coefficient {beta:.6g} >= 1; "
            "use the shifted_kernel route")
    h = np.zeros(model.num_states)
    history = []
    for it in range(1, cfg.max_iters + 1):
        th = bellman_operator(model, h)
        h_new = th - th[z]
        diff = span(h_new - h)
        history.append(diff)
        h = h_new
        if diff <= cfg.tolerance:
            break
    else:
        raise ConvergenceError(f"span_rvi did not converge in {cfg.max_iters} iterations")
    gain = float(bellman_operator(model, h)[z])
    q = model.bellman(h) - gain
    q -= q.min(axis=1)[z]
    return ACOESolution(
        gain=gain,
        h=q.min(axis=1),
        q=q,
        policy=greedy(q),
        residual=acoe_residual(model, gain, q),
        route="span_rvi",
        iterations=it,
        history=history,
    )


def solve_shifted_kernel(model: FiniteModel, cfg: Optional[SolverConfig] = None) -> ACOESolution:
    """Value iteration for ``f = min_u [C + (P - floor) f]``; gain ``= floor . f``."""
    cfg = cfg or SolverConfig(route="shifted_kernel")
    floor = model.floor if cfg.floor_override is None else np.asarray(cfg.floor_override, float)
    mass = float(floor.sum())
    if mass <= 0.0:
        raise AssumptionError("minorization floor is zero; use the span_rvi route")
    if np.any(model.kernel < floor[None, None, :] - 1e-12):
        raise AssumptionError("kernel does not dominate the supplied floor")
    alpha = 1.0 - mass
    threshold = cfg.tolerance * (1.0 - alpha) / alpha if alpha > 0 else np.inf
    f = np.zeros(model.num_states)
    history = []
    for it in range(1, cfg.max_iters + 1):
        f_new = shifted_operator(model, f, floor)
        diff = float(np.max(np.abs(f_new - f)))
        history.append(diff)
        f = f_new
        if diff <= threshold:
            break
    else:
        raise ConvergenceError(f"shifted_kernel did not converge in {cfg.max_iters} iterations")
    gain = float(floor @ f)
    q = model.bellman(f) - gain
    q -= q.min(axis=1).min()
    return ACOESolution(
        gain=gain,
        h=q.min(axis=1),
        q=q,
        policy=greedy(q),
        residual=acoe_residual(model, gain, q),
        route="shifted_kernel",
        iterations=it,
        history=history,
    )


def solve(model: FiniteModel, cfg: Optional[SolverConfig] = None) -> ACOESolution:
    cfg = cfg or SolverConfig()
    if cfg.route == "span_rvi":
        return solve_span_rvi(model, cfg)
    return solve_shifted_kernel(model, cfg)


def shifted_fixed_point(solution: ACOESolution, delta: float, support=None) -> np.ndarray:
    """The ACOE Q table shifted so that ``delta * sum_{support} min_u Q = gain``.

    This is the limit targeted by the delta-shifted asynchronous learner.
    """
    q = np.asarray(solution.q, dtype=float)
    idx = np.arange(q.shape[0]) if support is None else np.asarray(support, dtype=int)
    v = q.min(axis=1)
    shift = (solution.gain / delta - v[idx].sum()) / len(idx)
    return q + shift


# --------------------------------------------------------------------------
# oracles


def _recurrent_classes(P: np.ndarray):
    n, labels = connected_components(P > 0, directed=True, connection="strong")
    closed = []
    for c in range(n):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(len(P)), members)
        if outside.size == 0 or P[np.ix_(members, outside)].sum() == 0:
            closed.append(members)
    return closed


def _stationary(P: np.ndarray) -> np.ndarray:
    n = len(P)
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def chain_gain(P: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Long-run average cost of the Markov chain ``(P, c)`` from every start state.

    Uses the decomposition into closed communicating classes: each class has
    a unique stationary law, and transient states mix the class gains by
    their absorption probabilities.
    """
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(P)
    classes = _recurrent_classes(P)
    gains = np.full(n, np.nan)
    recurrent = np.zeros(n, dtype=bool)
    class_gain = []
    for members in classes:
        sub = P[np.ix_(members, members)]
        sub = sub / sub.sum(axis=1, keepdims=True)
        g = float(_stationary(sub) @ c[members])
        class_gain.append(g)
        gains[members] = g
        recurrent[members] = True
    transient = np.flatnonzero(~recurrent)
    if transient.size:
        Q = P[np.ix_(transient, transient)]
        absorb = np.zeros(transient.size)
        for members, g in zip(classes, class_gain):
            absorb += P[np.ix_(transient, members)].sum(axis=1) * g
        gains[transient] = np.linalg.solve(np.eye(transient.size) - Q, absorb)
    return gains


def policy_gain(model: FiniteModel, policy: Sequence[int]) -> np.ndarray:
    """Per-start average cost of a deterministic stationary policy."""
    policy = np.asarray(policy, dtype=int)
    rows = np.arange(model.num_states)
    return chain_gain(model.kernel[rows, policy], model.cost[rows, policy])


@dataclass
class BruteForceResult:
    gain: Optional[float]
    per_state_gain: np.ndarray
    policy: np.ndarray
    start_dependent: bool


def brute_force_gain(model: FiniteModel, max_policies: int = 1_000_000,
                     tol: float = 1e-12) -> BruteForceResult:
    """Optimal average cost by enumerating every deterministic stationary policy.

    ``gain`` is ``None`` when the optimal average cost depends on the start state.
    """
    M, K = model.num_states, model.num_actions
    if K ** M > max_policies:
        raise ValueError(f"{K}^{M} policies exceed the enumeration budget {max_policies}")
    best = np.full(M, np.inf)
    best_policy = None
    best_total = np.inf
    for pol in itertools.product(range(K), repeat=M):
        g = policy_gain(model, pol)
        best = np.minimum(best, g)
        # an optimal policy attains the pointwise minimum at every start
        if g.sum() < best_total - tol:
            best_total = g.sum()
            best_policy = np.array(pol)
    if np.any(policy_gain(model, best_policy) > best + 1e-9):
        logger.warning("no single enumerated policy attains the pointwise optimum")
    dependent = span(best) > 1e-9
    return BruteForceResult(
        gain=None if dependent else float(best.mean()),
        per_state_gain=best,
        policy=best_policy,
        start_dependent=bool(dependent),
    )


def discounted_values(model: FiniteModel, beta: float, tol: float = 1e-12,
                      max_iters: int = 10_000_000) -> np.ndarray:
    """Scaled discounted optimal values ``(1 - beta) J_beta``.

    Value iteration on the scaled problem with MacQueen's extrapolation:
    the returned midpoint is within ``tol`` of the fixed point.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    scale = beta / (1.0 - beta)
    w = np.zeros(model.num_states)
    for _ in range(max_iters):
        w_new = ((1.0 - beta) * model.cost + beta * (model.kernel @ w)).min(axis=1)
        d = w_new - w
        w = w_new
        if scale * span(d) <= 2.0 * tol:
            return w + scale * 0.5 * (d.max() + d.min())
    raise ConvergenceError("discounted value iteration did not converge")


def vanishing_discount(model: FiniteModel, betas: Sequence[float]):
    """``[(beta, (1 - beta) J_beta)]`` for each discount factor."""
    return [(float(b), discounted_values(model, b)) for b in betas]


class ACOESolver(BaseEstimator):
    """Estimator wrapper: ``fit`` a :class:`FiniteModel`, ``predict`` actions per state."""

    def __init__(self, route="shifted_kernel", tolerance=1e-10, max_iters=1_000_000,
                 reference_state=0):
        self.route = route
        self.tolerance = tolerance
        self.max_iters = max_iters
        self.reference_state = reference_state

    def fit(self, model: FiniteModel, y=None):
        cfg = SolverConfig(self.route, self.tolerance, self.max_iters, self.reference_state)
        self.solution_ = solve(model, cfg)
        self.gain_ = self.solution_.gain
        self.q_ = self.solution_.q
        return self

    def predict(self, states):
        check_is_fitted(self, "solution_")
        return self.solution_.policy[np.asarray(states, dtype=int)]
