"""Monte Carlo evaluation of lifted policies on the continuous model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import linregress

from .analysis import LipschitzCertificate, bound_policy_gap
from .core import AssumptionError, ContinuousModel, StationaryPolicy
from .quantization import QuantizationScheme, build_finite_model, loss_bound
from .solver import SolverConfig, solve


@dataclass
class EvalConfig:
    horizon: int = 1_000_000
    burn_in: int = 10_000
    num_rollouts: int = 8
    initial_states: Sequence[float] = (0.5,)
    seed: Optional[int] = 0

    def __post_init__(self):
        if not self.horizon > self.burn_in >= 0:
            raise ValueError("need horizon > burn_in >= 0")
        if self.num_rollouts < 1:
            raise ValueError("num_rollouts must be positive")
        if len(self.initial_states) == 0:
            raise ValueError("need at least one initial state")


@dataclass
class EvalResult:
    mean: float
    stderr: float
    values: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"mean_cost": self.mean, "stderr": self.stderr, "per_rollout": self.values.tolist()}


def evaluate_policy(model: ContinuousModel, policy: StationaryPolicy,
                    cfg: Optional[EvalConfig] = None) -> EvalResult:
    """Cesaro average cost of ``policy`` after burn-in, per rollout.

    Rollout ``r`` starts at ``initial_states[r % len(initial_states)]``; all
    rollouts advance together and share one random stream.
    """
    cfg = cfg or EvalConfig()
    if policy.action_values is None:
        raise ValueError("policy needs action values to act on the model")
    n = cfg.num_rollouts
    x0 = np.array([cfg.initial_states[r % len(cfg.initial_states)] for r in range(n)], dtype=float)
    x = model.check_state(x0).copy()
    rng = np.random.default_rng(cfg.seed)
    inner = policy.quantizer.edges_[1:-1]
    act = policy.action_values[policy.actions]
    total = np.zeros(n)
    cost, sampler, searchsorted = model.cost, model.sampler, np.searchsorted
    for t in range(cfg.horizon):
        u = act[searchsorted(inner, x, side="right")]
        if t >= cfg.burn_in:
            total += cost(x, u)
        x = sampler(x, u, rng)
    values = total / (cfg.horizon - cfg.burn_in)
    stderr = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EvalResult(float(values.mean()), stderr, values)


def constant_policy(scheme: QuantizationScheme, action_index: int) -> StationaryPolicy:
    return StationaryPolicy(np.full(scheme.n_bins, action_index), scheme.quantizer,
                            scheme.action_net)


def relative_value_table(solution) -> np.ndarray:
    """Relative values shifted so the minimum is zero (plot normalization)."""
    h = np.asarray(solution.h, dtype=float)
    return h - h.min()


@dataclass
class SweepRow:
    M: int
    net_id: str
    L_X: float
    mean_cost: float
    stderr: float
    gain_finite_model: float
    bound_theorem7: Optional[float]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


SWEEP_COLUMNS = ("M", "net_id", "L_X", "mean_cost", "stderr", "gain_finite_model", "bound_theorem7")


def net_id(net) -> str:
    return "{" + ",".join(f"{a:g}" for a in net) + "}"


def sweep_quantization(model: ContinuousModel, bin_counts: Sequence[int], nets: Sequence,
                       cfg: Optional[EvalConfig] = None,
                       cert: Optional[LipschitzCertificate] = None,
                       method: str = "exact") -> list:
    """Build, solve and evaluate the lifted policy for every (M, net) cell."""
    cfg = cfg or EvalConfig()
    rows = []
    for net in nets:
        for M in bin_counts:
            scheme = QuantizationScheme.for_model(model, M, net)
            finite = build_finite_model(model, scheme, method=method, rng=cfg.seed)
            sol = solve(finite, SolverConfig(route="shifted_kernel")
                        if finite.floor.sum() > 0 else SolverConfig(route="span_rvi"))
            policy = StationaryPolicy(sol.policy, scheme.quantizer, scheme.action_net)
            res = evaluate_policy(model, policy, cfg)
            L = loss_bound(scheme)
            bound = None
            if cert is not None and model.minorization is not None:
                try:
                    bound = bound_policy_gap(cert, L, model.minorization.mass)
                except AssumptionError:
                    bound = None
            rows.append(SweepRow(M, net_id(net), L, res.mean, res.stderr, sol.gain, bound))
    return rows


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_trend(rows: Sequence[SweepRow]) -> LinearFit:
    """Least-squares fit of mean cost against quantization loss."""
    x = np.array([r.L_X for r in rows])
    y = np.array([r.mean_cost for r in rows])
    fit = linregress(x, y)
    return LinearFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2))
