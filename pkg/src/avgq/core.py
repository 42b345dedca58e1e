"""Domain types shared across the package.

A :class:`ContinuousModel` describes a controlled Markov chain on a compact
interval. A :class:`FiniteModel` is the aggregated model produced by
quantization, and :class:`ACOESolution` holds a solution of its average cost
optimality equation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ROW_TOL = 1e-9


class DomainError(ValueError):
    """Raised when an input lies outside the model's state or action space."""


class AssumptionError(RuntimeError):
    """Raised when a hypothesis required by an operation does not hold."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative method exhausts its iteration budget."""


def bin_index(edges: np.ndarray, x) -> np.ndarray:
    """Bin of ``x`` for the partition ``edges``.

    Bins are ``[e_i, e_{i+1})`` except the last, which is closed.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < edges[0]) or np.any(x > edges[-1]) or np.any(np.isnan(x)):
        raise DomainError(f"state outside [{edges[0]}, {edges[-1]}]")
    idx = np.searchsorted(edges, x, side="right") - 1
    return np.minimum(idx, len(edges) - 2)


@dataclass(frozen=True)
class Minorization:
    """Certified lower bound ``T(B | x, u) >= mu(B)`` for all ``(x, u)``.

    ``measure(lo, hi)`` returns ``mu`` of intervals; models on a finite
    state set give ``point_masses`` aligned with their support instead.
    """

    mass: float
    measure: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    point_masses: Optional[tuple] = None

    def __post_init__(self):
        if self.measure is None and self.point_masses is None:
            raise ValueError("need either an interval measure or point masses")

    def bin_masses(self, edges, support=None) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        if self.point_masses is not None:
            idx = bin_index(edges, np.asarray(support, dtype=float))
            return np.bincount(idx, weights=np.asarray(self.point_masses, dtype=float),
                               minlength=len(edges) - 1)
        return np.asarray(self.measure(edges[:-1], edges[1:]), dtype=float)


@dataclass(frozen=True)
class ContinuousModel:
    """A controlled Markov model on a compact interval.

    ``cost(x, u)`` and ``sampler(x, u, rng)`` must accept numpy arrays that
    broadcast against each other. ``bin_kernel(x, u, edges)`` returns the
    exact next-state probabilities of every bin of the partition ``edges``
    (trailing axis), using the convention of :func:`bin_index`.
    """

    name: str
    state_bounds: tuple[float, float]
    cost: Callable
    sampler: Callable
    cost_bound: float
    actions: Optional[tuple[float, ...]] = None
    action_interval: Optional[tuple[float, float]] = None
    bin_kernel: Optional[Callable] = None
    minorization: Optional[Minorization] = None
    # Sorted finite support, for models whose states are a discrete set.
    support: Optional[tuple[float, ...]] = None
    # Optional hook: points where x -> T(B|x,u) is not smooth, for quadrature.
    kernel_breakpoints: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.state_bounds
        if not lo < hi:
            raise ValueError(f"empty state interval {self.state_bounds}")
        if self.cost_bound < 0:
            raise ValueError("cost_bound must be nonnegative")
        if self.actions is None and self.action_interval is None:
            raise ValueError("either actions or action_interval is required")

    @property
    def state_dim(self) -> int:
        return 1

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.state_bounds
        if np.any(~np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"state outside [{lo}, {hi}]")
        return x

    def check_action(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.action_interval is not None:
            lo, hi = self.action_interval
            ok = (u >= lo) & (u <= hi)
        else:
            ok = np.isin(u, np.asarray(self.actions))
        if not np.all(ok):
            raise DomainError("action outside the action set")
        return u


@dataclass
class FiniteModel:
    """Finite aggregated MDP with cost ``C*`` and kernel ``P*``.

    ``kernel[y, u, z]`` is the probability of moving from ``y`` to ``z``
    under action index ``u``.  ``floor[z]`` is a certified lower bound on
    every ``kernel[:, :, z]``.
    """

    cost: np.ndarray
    kernel: np.ndarray
    floor: Optional[np.ndarray] = None
    action_values: Optional[np.ndarray] = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self.kernel = np.asarray(self.kernel, dtype=float)
        if self.cost.ndim != 2:
            raise ValueError("cost must be an M x K array")
        M, K = self.cost.shape
        if self.kernel.shape != (M, K, M):
            raise ValueError(f"kernel must have shape {(M, K, M)}, got {self.kernel.shape}")
        if self.floor is None:
            self.floor = np.zeros(M)
        self.floor = np.asarray(self.floor, dtype=float)
        if self.floor.shape != (M,):
            raise ValueError("floor must have length M")
        if self.action_values is not None:
            self.action_values = np.asarray(self.action_values, dtype=float)

    @property
    def num_states(self) -> int:
        return self.cost.shape[0]

    @property
    def num_actions(self) -> int:
        return self.cost.shape[1]

    def validate(self, tol: float = ROW_TOL) -> None:
        """Raise ``ValueError`` if the kernel or floor invariants fail."""
        if np.any(self.kernel < -tol):
            raise ValueError("kernel has negative entries")
        rows = self.kernel.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > tol:
            raise ValueError("kernel rows do not sum to one")
        if np.any(self.floor < 0) or self.floor.sum() >= 1.0 + tol:
            raise ValueError("floor must be nonnegative with total mass below one")
        if np.any(self.kernel < self.floor[None, None, :] - tol):
            raise ValueError("kernel violates the minorization floor")

    def bellman(self, h: np.ndarray) -> np.ndarray:
        """State-action values ``C + P h``."""
        return self.cost + self.kernel @ h

    def to_dict(self) -> dict:
        d = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "cost": self.cost.ravel().tolist(),
            "kernel": self.kernel.ravel().tolist(),
            "floor": self.floor.tolist(),
        }
        if self.action_values is not None:
            d["action_values"] = self.action_values.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteModel":
        M, K = int(d["num_states"]), int(d["num_actions"])
        return cls(
            cost=np.array(d["cost"], dtype=float).reshape(M, K),
            kernel=np.array(d["kernel"], dtype=float).reshape(M, K, M),
            floor=np.array(d.get("floor", [0.0] * M), dtype=float),
            action_values=d.get("action_values"),
        )


@dataclass
class ACOESolution:
    """Canonical triplet of a finite model plus its Q table."""

    gain: float
    h: np.ndarray
    q: np.ndarray
    policy: np.ndarray
    residual: float
    route: str = ""
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "gain": float(self.gain),
            "h": np.asarray(self.h).tolist(),
            "q": np.asarray(self.q).ravel().tolist(),
            "num_states": int(self.q.shape[0]),
            "num_actions": int(self.q.shape[1]),
            "policy": [int(a) for a in self.policy],
            "residual": float(self.residual),
            "route": self.route,
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ACOESolution":
        M, K = int(d["num_states"]), int(d["num_actions"])
        return cls(
            gain=float(d["gain"]),
            h=np.array(d["h"], dtype=float),
            q=np.array(d["q"], dtype=float).reshape(M, K),
            policy=np.array(d["policy"], dtype=int),
            residual=float(d["residual"]),
            route=d.get("route", ""),
            iterations=int(d.get("iterations", 0)),
        )


def acoe_residual(model: FiniteModel, gain: float, q: np.ndarray) -> float:
    """Max-norm residual of ``j + Q = C + P min_v Q``."""
    v = q.min(axis=1)
    return float(np.max(np.abs(gain + q - model.bellman(v))))


def greedy(q: np.ndarray) -> np.ndarray:
    """Argmin over actions; ties go to the smallest index."""
    return np.argmin(q, axis=1)


def span(v) -> float:
    v = np.asarray(v)
    return float(v.max() - v.min())


@dataclass(frozen=True)
class StationaryPolicy:
    """Per-bin action indices together with the quantizer that lifts them."""

    actions: np.ndarray
    quantizer: "object"  # a fitted avgq.quantization.StateQuantizer
    action_values: Optional[np.ndarray] = None

    def __post_init__(self):
        actions = np.asarray(self.actions, dtype=int)
        object.__setattr__(self, "actions", actions)
        if self.action_values is not None:
            vals = np.asarray(self.action_values, dtype=float)
            object.__setattr__(self, "action_values", vals)
            if np.any(actions < 0) or np.any(actions >= len(vals)):
                raise ValueError("action index out of range")
        if len(actions) != self.quantizer.n_bins_:
            raise ValueError("policy must assign an action to every bin")

    def action_index(self, x) -> np.ndarray:
        return self.actions[self.quantizer.transform(x)]

    def __call__(self, x):
        idx = self.action_index(x)
        if self.action_values is None:
            return idx
        return self.action_values[idx]


def lift_policy(policy: StationaryPolicy, x):
    """Action that ``policy`` assigns to the bin containing ``x``."""
    return policy(x)


def spawn_rng(seed, index: Optional[int] = None) -> np.random.Generator:
    """Generator for ``seed``, or for the ``index``-th worker stream of ``seed``."""
    if index is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(index + 1)[index])


def dumps(obj: dict) -> str:
    """JSON with full float precision (repr round-trips exactly)."""
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False)


def as_list(values: Sequence[float]) -> list:
    return [float(v) for v in values]
