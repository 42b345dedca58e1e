"""Asynchronous (single trajectory) quantized Q-learning with a delta shift.

The update subtracts ``delta * sum_{y in S} min_u Q(y, u)`` from every target,
which pins the learned table to the fixed point whose shifted value sum
equals the optimal average cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_positive_int
from .core import (
    AssumptionError,
    ContinuousModel,
    FiniteModel,
    StationaryPolicy,
    greedy,
)
from .quantization import EmpiricalWeights, QuantizationScheme


@dataclass
class AsyncConfig:
    """Settings for one exploration run.

    ``exploration`` is an ``(M, K)`` table of per-bin action probabilities
    (uniform when omitted).  ``delta=None`` picks half of the smallest
    certified bin floor on the shift support.
    """

    horizon: int = 100_000
    delta: Optional[float] = None
    exploration: Optional[np.ndarray] = None
    shift_support: Union[str, Sequence[int]] = "all_bins"
    x0: float = 0.5
    seed: Optional[int] = 0
    snapshot_every: int = 1000
    q0: Optional[np.ndarray] = None
    log_trajectory: bool = False

    def __post_init__(self):
        check_positive_int(self.horizon, "horizon")
        check_positive_int(self.snapshot_every, "snapshot_every")


@dataclass
class TrajectoryLog:
    x: np.ndarray
    bin: np.ndarray
    action_index: np.ndarray
    cost: np.ndarray
    x_next: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class AsyncResult:
    q: np.ndarray
    visits: np.ndarray
    delta: float
    support: np.ndarray
    curve: list = field(default_factory=list)
    log: Optional[TrajectoryLog] = None

    @property
    def gain_estimate(self) -> float:
        return gain_estimate(self.q, self.delta, self.support)


def gain_estimate(q: np.ndarray, delta: float, shift_support=None) -> float:
    """``delta * sum_{y in support} min_u Q(y, u)``."""
    v = np.asarray(q, dtype=float).min(axis=1)
    if shift_support is None or (isinstance(shift_support, str) and shift_support == "all_bins"):
        return float(delta * v.sum())
    return float(delta * v[np.asarray(shift_support, dtype=int)].sum())


def resolve_support(scheme: QuantizationScheme, shift_support) -> np.ndarray:
    if isinstance(shift_support, str):
        if shift_support != "all_bins":
            raise ValueError(f"unknown shift support {shift_support!r}")
        return np.arange(scheme.n_bins)
    idx = np.unique(np.asarray(shift_support, dtype=int))
    if idx.size == 0 or idx.min() < 0 or idx.max() >= scheme.n_bins:
        raise ValueError("shift support must be a non-empty set of bin indices")
    return idx


def certified_bin_floor(model: ContinuousModel, scheme: QuantizationScheme) -> Optional[np.ndarray]:
    if model.minorization is None:
        return None
    return model.minorization.bin_masses(scheme.edges, model.support)


def default_delta(model, scheme, support) -> float:
    floor = certified_bin_floor(model, scheme)
    if floor is None or floor[support].min() <= 0:
        raise AssumptionError("no positive certified floor on the shift support; pass delta")
    return 0.5 * float(floor[support].min())


def train_async(model: ContinuousModel, scheme: QuantizationScheme, cfg: AsyncConfig,
                reference_q: Optional[np.ndarray] = None) -> AsyncResult:
    """Run one trajectory of ``cfg.horizon`` steps and return the learned table.

    The learning rate of the visited pair is ``1 / (1 + N)`` with ``N`` its
    visit count after the current visit.
    """
    M, K = scheme.n_bins, len(scheme.action_net)
    support = resolve_support(scheme, cfg.shift_support)
    delta = default_delta(model, scheme, support) if cfg.delta is None else float(cfg.delta)
    if not delta > 0:
        raise AssumptionError("delta must be positive")
    floor = certified_bin_floor(model, scheme)
    if floor is not None and delta >= floor[support].min():
        raise AssumptionError(
            f"delta={delta} is not below the smallest certified bin floor {floor[support].min():.6g}")

    gamma = np.full((M, K), 1.0 / K) if cfg.exploration is None else np.asarray(cfg.exploration, float)
    if gamma.shape != (M, K) or np.any(gamma <= 0):
        raise AssumptionError("exploration must give every action positive mass in every bin")
    gamma = gamma / gamma.sum(axis=1, keepdims=True)
    cum = np.cumsum(gamma, axis=1)
    cum[:, -1] = 1.0

    rng = np.random.default_rng(cfg.seed)
    edges = scheme.edges
    net = [float(a) for a in scheme.action_net]
    inner_edges = edges[1:-1]
    q = np.zeros((M, K)) if cfg.q0 is None else np.array(cfg.q0, dtype=float)
    if q.shape != (M, K):
        raise ValueError("q0 has the wrong shape")
    visits = np.zeros((M, K), dtype=np.int64)
    v = q.min(axis=1)
    in_support = np.zeros(M, dtype=bool)
    in_support[support] = True
    shift_sum = float(v[support].sum())

    L = cfg.horizon
    action_draws = rng.random(L)
    log = None
    if cfg.log_trajectory:
        log = TrajectoryLog(np.empty(L), np.empty(L, dtype=np.int64), np.empty(L, dtype=np.int64),
                            np.empty(L), np.empty(L))
    result = AsyncResult(q, visits, delta, support, log=log)

    # Plain Python lists keep the per-step overhead low.
    Q = q.tolist()
    N = visits.tolist()
    V = v.tolist()
    cum_rows = cum.tolist()
    searchsorted = np.searchsorted
    x = float(model.check_state(cfg.x0))
    y = int(searchsorted(inner_edges, x, side="right"))
    cost_fn, sampler = model.cost, model.sampler

    def pick(row, r):
        for k, c in enumerate(row):
            if r < c:
                return k
        return len(row) - 1

    k = pick(cum_rows[y], action_draws[0])
    for t in range(L):
        u = net[k]
        c = float(cost_fn(x, u))
        x_next = float(sampler(x, u, rng))
        y_next = int(searchsorted(inner_edges, x_next, side="right"))
        n = N[y][k] + 1
        N[y][k] = n
        alpha = 1.0 / (1.0 + n)
        row = Q[y]
        row[k] = (1.0 - alpha) * row[k] + alpha * (c + V[y_next] - delta * shift_sum)
        v_new = min(row)
        if v_new != V[y]:
            if in_support[y]:
                shift_sum += v_new - V[y]
            V[y] = v_new
        if log is not None:
            log.x[t], log.bin[t], log.action_index[t] = x, y, k
            log.cost[t], log.x_next[t] = c, x_next
        if (t + 1) % cfg.snapshot_every == 0 or t + 1 == L:
            arr = np.array(Q)
            result.curve.append({
                "t": t + 1,
                "gain_estimate": delta * shift_sum,
                "sup_to_ref": float(np.max(np.abs(arr - reference_q)))
                if reference_q is not None else None,
                "visits_min": int(np.min(N)),
            })
        x, y = x_next, y_next
        if t + 1 < L:
            k = pick(cum_rows[y], action_draws[t + 1])

    result.q = np.array(Q)
    result.visits = np.array(N, dtype=np.int64)
    return result


def occupation_weights(log: Union[TrajectoryLog, np.ndarray],
                       scheme: QuantizationScheme) -> EmpiricalWeights:
    """Empirical state-occupation measure of a logged trajectory."""
    xs = log.x if isinstance(log, TrajectoryLog) else np.asarray(log, dtype=float)
    if len(xs) == 0:
        raise ValueError("trajectory log is empty")
    return EmpiricalWeights.from_samples(scheme.quantizer, xs)


def occupation_scheme(log, scheme: QuantizationScheme) -> QuantizationScheme:
    """Copy of ``scheme`` whose weight measure is the trajectory's occupation measure."""
    return QuantizationScheme(scheme.quantizer, scheme.action_net,
                              occupation_weights(log, scheme), scheme.support)


class AsyncQuantizedQLearning(BaseEstimator):
    """Single-trajectory quantized Q-learning as an estimator."""

    def __init__(self, n_bins=4, action_net=(-1.0, 0.0, 1.0), horizon=100_000, delta=None,
                 x0=0.5, shift_support="all_bins", snapshot_every=1000, random_state=0):
        self.n_bins = n_bins
        self.action_net = action_net
        self.horizon = horizon
        self.delta = delta
        self.x0 = x0
        self.shift_support = shift_support
        self.snapshot_every = snapshot_every
        self.random_state = random_state

    def fit(self, model: ContinuousModel, y=None):
        self.scheme_ = QuantizationScheme.for_model(model, self.n_bins, self.action_net)
        cfg = AsyncConfig(horizon=self.horizon, delta=self.delta, x0=self.x0,
                          shift_support=self.shift_support, seed=self.random_state,
                          snapshot_every=self.snapshot_every)
        res = train_async(model, self.scheme_, cfg)
        self.q_ = res.q
        self.visits_ = res.visits
        self.gain_ = res.gain_estimate
        self.curve_ = res.curve
        self.policy_ = StationaryPolicy(greedy(self.q_), self.scheme_.quantizer,
                                        self.scheme_.action_net)
        return self

    def predict(self, states):
        check_is_fitted(self, "policy_")
        return self.policy_(states)
