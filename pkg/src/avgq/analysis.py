"""Error bounds for quantized models and numerical checks of their hypotheses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from .core import AssumptionError, ContinuousModel
from .quantization import QuantizationScheme, covering_radius

SAFETY_MARGIN = 1.02
DEFAULT_GRID = 50
CDF_CELLS = 4000


@dataclass(frozen=True)
class LipschitzCertificate:
    """Lipschitz constants of the cost (``K_c``) and of the kernel in W1 (``K_f``)."""

    K_c: float
    K_f: float
    source: str = "declared"

    def __post_init__(self):
        if self.K_c < 0 or self.K_f < 0:
            raise ValueError("Lipschitz constants must be nonnegative")

    @classmethod
    def estimated(cls, K_c: float, K_f: float, grid: int) -> "LipschitzCertificate":
        """Grid maxima under-estimate suprema; inflate by the safety margin."""
        return cls(K_c * SAFETY_MARGIN, K_f * SAFETY_MARGIN, f"estimated({grid})")

    def require_contraction(self) -> None:
        if self.K_f >= 1.0:
            raise AssumptionError(f"bound needs K_f < 1, got K_f = {self.K_f}")


def bound_value_gap(cert: LipschitzCertificate, loss: float) -> float:
    """Bound on the optimal average cost gap caused by state quantization."""
    cert.require_contraction()
    return cert.K_c / (1.0 - cert.K_f) * loss


def bound_policy_gap(cert: LipschitzCertificate, loss: float, mu_mass: float) -> float:
    """Bound on the excess average cost of the lifted quantized-model policy."""
    cert.require_contraction()
    if not 0.0 < mu_mass < 1.0:
        raise AssumptionError(f"minorization mass must lie in (0, 1), got {mu_mass}")
    return 2.0 * cert.K_c / ((1.0 - cert.K_f) * mu_mass) * loss


def bound_action_gap(cert: LipschitzCertificate, n: float) -> float:
    """Bound for replacing the action set by a ``1/n``-net (``n = inf`` gives 0)."""
    cert.require_contraction()
    if not n > 0:
        raise ValueError("net resolution must be positive")
    return cert.K_c / (1.0 - cert.K_f) * (1.0 / n)


def bound_combined(cert: LipschitzCertificate, loss_x: float, mu_mass: float,
                   loss_u: float) -> float:
    """State and action quantization together; ``loss_u`` is the net's covering radius."""
    return bound_policy_gap(cert, loss_x, mu_mass) + cert.K_c / (1.0 - cert.K_f) * loss_u


def _grid(model: ContinuousModel, grid: int) -> np.ndarray:
    if model.support is not None:
        return np.asarray(model.support, dtype=float)
    lo, hi = model.state_bounds
    return np.linspace(lo, hi, grid)


def _actions(model: ContinuousModel, actions) -> np.ndarray:
    if actions is not None:
        return np.asarray(actions, dtype=float)
    if model.actions is not None:
        return np.asarray(model.actions, dtype=float)
    lo, hi = model.action_interval
    return np.linspace(lo, hi, 5)


def estimate_cost_lipschitz(model: ContinuousModel, grid: int = DEFAULT_GRID,
                            actions=None) -> float:
    """Largest slope ``|c(x,u) - c(x',u)| / |x - x'|`` over grid pairs."""
    xs = _grid(model, grid)
    worst = 0.0
    for u in _actions(model, actions):
        c = np.asarray(model.cost(xs, u), dtype=float)
        dx = np.abs(xs[:, None] - xs[None, :])
        mask = dx > 0
        worst = max(worst, float(np.max(np.abs(c[:, None] - c[None, :])[mask] / dx[mask])))
    return worst


def estimate_wasserstein_lipschitz(model: ContinuousModel, grid: int = DEFAULT_GRID,
                                   actions=None, samples: int = 10_000,
                                   seed: int = 0) -> float:
    """Largest ``W1(T(.|x,u), T(.|x',u)) / |x - x'|`` over grid pairs.

    One-dimensional only: W1 is the L1 distance between CDFs.  With an exact
    bin kernel the CDFs are taken on a fine partition (W1 error at most one
    cell width); otherwise ``samples`` coupled draws per state are used.
    """
    if model.state_dim != 1:
        raise NotImplementedError("Wasserstein estimation is implemented for 1-D states only")
    xs = _grid(model, grid)
    lo, hi = model.state_bounds
    dx = np.abs(xs[:, None] - xs[None, :])
    mask = dx > 0
    worst = 0.0
    for u in _actions(model, actions):
        if model.bin_kernel is not None:
            edges = np.linspace(lo, hi, CDF_CELLS + 1)
            mass = np.asarray(model.bin_kernel(xs[:, None], u, edges)).reshape(len(xs), -1)
            cdf = np.cumsum(mass, axis=1)
            h = (hi - lo) / CDF_CELLS
            w1 = np.abs(cdf[:, None, :] - cdf[None, :, :]).sum(axis=2) * h
        else:
            draws = []
            for x in xs:
                rng = np.random.default_rng(seed)  # same stream for every x: coupled samples
                draws.append(np.asarray(model.sampler(np.full(samples, x), np.full(samples, u), rng)))
            w1 = np.zeros((len(xs), len(xs)))
            for i in range(len(xs)):
                for j in range(i + 1, len(xs)):
                    w1[i, j] = w1[j, i] = wasserstein_distance(draws[i], draws[j])
        worst = max(worst, float(np.max(w1[mask] / dx[mask])))
    return worst


@dataclass
class MinorizationReport:
    """Outcome of checking ``T(B_i | x, u) >= mu(B_i)`` on a test grid."""

    status: str  # "certified", "violated" or "unverifiable"
    floor: Optional[np.ndarray] = None
    min_slack: Optional[np.ndarray] = None
    positive_bins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    declared: bool = False

    @property
    def some_bin_positive(self) -> bool:
        return self.status == "certified" and self.positive_bins.size > 0

    @property
    def all_bins_positive(self) -> bool:
        return self.some_bin_positive and self.floor is not None and bool(np.all(self.floor > 0))

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "floor": None if self.floor is None else self.floor.tolist(),
            "min_slack": None if self.min_slack is None else self.min_slack.tolist(),
            "positive_bins": self.positive_bins.tolist(),
            "some_bin_positive": self.some_bin_positive,
            "all_bins_positive": self.all_bins_positive,
        }


def check_minorization(model: ContinuousModel, scheme: QuantizationScheme,
                       grid: int = DEFAULT_GRID, actions=None, tol: float = 1e-9) -> MinorizationReport:
    """Check a declared floor on every bin, or infer the best floor the grid allows.

    Without a declared certificate the per-bin floor is the grid minimum of
    the bin masses; the check passes only if some bin keeps positive mass.
    """
    if model.bin_kernel is None:
        return MinorizationReport("unverifiable", declared=model.minorization is not None)
    xs = _grid(model, grid)
    us = _actions(model, scheme.action_net if actions is None else actions)
    masses = np.asarray(model.bin_kernel(xs[:, None], us[None, :], scheme.edges))
    lowest = masses.reshape(-1, scheme.n_bins).min(axis=0)
    if model.minorization is not None:
        floor = model.minorization.bin_masses(scheme.edges, model.support)
        slack = lowest - floor
        ok = bool(np.all(slack >= -tol)) and floor.sum() > 0
        return MinorizationReport("certified" if ok else "violated", floor, slack,
                                  np.flatnonzero(floor > 0), declared=True)
    floor = np.where(lowest > tol, lowest, 0.0)
    status = "certified" if floor.sum() > 0 else "violated"
    return MinorizationReport(status, floor, lowest - floor, np.flatnonzero(floor > 0))


def cost_aggregation_gap(model: ContinuousModel, finite, scheme: QuantizationScheme,
                   grid: int = 201) -> float:
    """``sup |C*(q(x), u) - c(x, u)|`` over a state grid and the scheme's actions."""
    xs = _grid(model, grid)
    bins = scheme.quantizer.transform(xs)
    worst = 0.0
    for k, u in enumerate(scheme.action_net):
        worst = max(worst, float(np.max(np.abs(finite.cost[bins, k] - model.cost(xs, u)))))
    return worst


def bound_report(theorem: str, inputs: dict, bound: float,
                 empirical_gap: Optional[float] = None) -> dict:
    return {
        "theorem": theorem,
        "inputs": inputs,
        "bound": bound,
        "empirical_gap": empirical_gap,
        "satisfied": None if empirical_gap is None else bool(empirical_gap <= bound),
    }


def implied_net_resolution(net: Sequence[float], lo: float, hi: float) -> float:
    """The ``n`` for which the net's covering radius equals ``1/n``."""
    r = covering_radius(net, lo, hi)
    return np.inf if r == 0 else 1.0 / r
