"""Synchronous quantized Q-learning for the average cost criterion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_is_fitted, check_positive_int
from .core import ACOESolution, ContinuousModel, FiniteModel, StationaryPolicy, greedy, span
from .quantization import QuantizationScheme, bin_index
from .solver import tv_coefficient

logger = logging.getLogger(__name__)


def harmonic(t: int) -> float:
    return 1.0 / t


@dataclass
class SyncConfig:
    num_sweeps: int = 1000
    learning_rate: Callable[[int], float] = harmonic
    normalization: tuple = (0, 0)
    seed: Optional[int] = 0
    snapshot_every: int = 100
    q0: Optional[np.ndarray] = None

    def __post_init__(self):
        check_positive_int(self.num_sweeps, "num_sweeps")
        check_positive_int(self.snapshot_every, "snapshot_every")


@dataclass
class SyncResult:
    q_hat: np.ndarray
    q: np.ndarray
    curve: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    sup_norms: Optional[np.ndarray] = None


def recover_gain(q_hat: np.ndarray, finite: FiniteModel, pair=(0, 0), tol: float = 1e-9) -> float:
    """Average cost implied by a normalized Q table: ``C*(y0,u0) + P*(.|y0,u0) . min_u Q``."""
    y0, u0 = pair
    q_hat = np.asarray(q_hat, dtype=float)
    if abs(q_hat[y0, u0]) > tol:
        raise ValueError(f"Q table is not normalized at {pair}: {q_hat[y0, u0]!r}")
    return float(finite.cost[y0, u0] + finite.kernel[y0, u0] @ q_hat.min(axis=1))


def train_sync(model: ContinuousModel, scheme: QuantizationScheme, cfg: SyncConfig,
               reference: Optional[ACOESolution] = None,
               finite: Optional[FiniteModel] = None,
               track_norms: bool = False) -> SyncResult:
    """Run ``cfg.num_sweeps`` synchronous sweeps over every (bin, action) cell.

    Each sweep draws one state per bin from the normalized weight measure,
    shares it across actions, and draws an independent next state per cell.
    """
    M, K = scheme.n_bins, len(scheme.action_net)
    y0, u0 = cfg.normalization
    if not (0 <= y0 < M and 0 <= u0 < K):
        raise ValueError("normalization pair out of range")
    if finite is not None:
        beta = tv_coefficient(finite)
        if beta >= 1.0:
            logger.warning("TV coefficient %.4g >= 1; span contraction is not certified", beta)
    rng = np.random.default_rng(cfg.seed)
    edges = scheme.edges
    actions = np.broadcast_to(scheme.action_net, (M, K))
    q = np.zeros((M, K)) if cfg.q0 is None else np.array(cfg.q0, dtype=float)
    q_hat_prev = q - q[y0, u0]
    result = SyncResult(q_hat=q_hat_prev, q=q)
    norms = np.empty(cfg.num_sweeps + 1) if track_norms else None
    if track_norms:
        norms[0] = np.abs(q).max()

    for t in range(1, cfg.num_sweeps + 1):
        alpha = cfg.learning_rate(t)
        xs = np.array([scheme.sample_bin(i, None, rng) for i in range(M)])
        xs = np.broadcast_to(xs[:, None], (M, K))
        costs = model.cost(xs, actions)
        nxt = model.sampler(xs, actions, rng)
        v = q.min(axis=1)
        target = costs + v[bin_index(edges, nxt)]
        q = (1.0 - alpha) * q + alpha * target
        q_hat = q - q[y0, u0]
        if track_norms:
            norms[t] = np.abs(q).max()
        if t % cfg.snapshot_every == 0 or t == cfg.num_sweeps:
            row = {"sweep": t,
                   "span_to_ref": span(q_hat - reference.q) if reference is not None else None,
                   "span_successive": span(q_hat - q_hat_prev),
                   "gain_estimate": recover_gain(q_hat, finite, (y0, u0))
                   if finite is not None else None}
            result.curve.append(row)
            result.snapshots.append((t, q_hat.copy()))
        q_hat_prev = q_hat
    result.q = q
    result.q_hat = q - q[y0, u0]
    result.sup_norms = norms
    return result


class SyncQuantizedQLearning(BaseEstimator):
    """Synchronous quantized Q-learning as an estimator.

    ``fit(model)`` learns a normalized Q table over the bins of a uniform
    partition; ``predict(states)`` returns the greedy action values.
    """

    def __init__(self, n_bins=5, action_net=(-1.0, 0.0, 1.0), num_sweeps=1000,
                 snapshot_every=100, random_state=0):
        self.n_bins = n_bins
        self.action_net = action_net
        self.num_sweeps = num_sweeps
        self.snapshot_every = snapshot_every
        self.random_state = random_state

    def fit(self, model: ContinuousModel, y=None):
        self.scheme_ = QuantizationScheme.for_model(model, self.n_bins, self.action_net)
        cfg = SyncConfig(num_sweeps=self.num_sweeps, seed=self.random_state,
                         snapshot_every=self.snapshot_every)
        res = train_sync(model, self.scheme_, cfg)
        self.q_ = res.q_hat
        self.curve_ = res.curve
        self.policy_ = StationaryPolicy(greedy(self.q_), self.scheme_.quantizer,
                                        self.scheme_.action_net)
        return self

    def predict(self, states):
        check_is_fitted(self, "policy_")
        return self.policy_(states)
