"""State/action quantization and construction of the aggregated finite model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad_vec
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_is_fitted, check_positive_int, check_states
from .core import ContinuousModel, FiniteModel, bin_index

QUAD_TOL = 1e-8


class StateQuantizer(TransformerMixin, BaseEstimator):
    """Map states of an interval to bin indices.

    Parameters
    ----------
    n_bins : int
        Number of equal-width bins (ignored when ``edges`` is given).
    bounds : tuple of float
        The state interval.
    edges : array-like, optional
        Explicit increasing bin edges, first and last equal to ``bounds``.
    representatives : array-like, optional
        One state per bin; defaults to bin midpoints.
    """

    def __init__(self, n_bins=4, bounds=(0.0, 1.0), edges=None, representatives=None):
        self.n_bins = n_bins
        self.bounds = bounds
        self.edges = edges
        self.representatives = representatives

    def fit(self, X=None, y=None):
        lo, hi = map(float, self.bounds)
        if not lo < hi:
            raise ValueError("bounds must be an increasing pair")
        if self.edges is None:
            n = check_positive_int(self.n_bins, "n_bins")
            edges = np.linspace(lo, hi, n + 1)
        else:
            edges = np.asarray(self.edges, dtype=float)
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ValueError("edges must be strictly increasing")
            if edges[0] != lo or edges[-1] != hi:
                raise ValueError("edges must start and end at the bounds")
        if self.representatives is None:
            reps = 0.5 * (edges[:-1] + edges[1:])
        else:
            reps = np.asarray(self.representatives, dtype=float)
            if reps.shape != (len(edges) - 1,):
                raise ValueError("need exactly one representative per bin")
            if np.any(bin_index(edges, reps) != np.arange(len(reps))):
                raise ValueError("each representative must lie in its own bin")
        self.edges_ = edges
        self.representatives_ = reps
        self.n_bins_ = len(edges) - 1
        return self

    def transform(self, X):
        check_is_fitted(self, "edges_")
        return bin_index(self.edges_, check_states(X) if np.ndim(X) else X)

    def inverse_transform(self, X):
        check_is_fitted(self, "edges_")
        return self.representatives_[np.asarray(X, dtype=int)]

    @property
    def widths_(self) -> np.ndarray:
        return np.diff(self.edges_)

    @classmethod
    def identity(cls, points: Sequence[float], bounds=None) -> "StateQuantizer":
        """One bin per point of a finite state set, the point being its representative."""
        pts = np.sort(np.asarray(points, dtype=float))
        if bounds is None:
            bounds = (pts[0] - 0.5, pts[-1] + 0.5) if len(pts) == 1 else (
                pts[0] - 0.5 * (pts[1] - pts[0]), pts[-1] + 0.5 * (pts[-1] - pts[-2]))
        inner = 0.5 * (pts[:-1] + pts[1:])
        edges = np.concatenate([[bounds[0]], inner, [bounds[1]]])
        return cls(bounds=tuple(bounds), edges=edges, representatives=pts).fit()


@dataclass
class EmpiricalWeights:
    """Weight measure given by samples (for instance a logged trajectory)."""

    bin_samples: list
    frequencies: np.ndarray
    empty_bins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @classmethod
    def from_samples(cls, quantizer: StateQuantizer, samples) -> "EmpiricalWeights":
        samples = check_states(samples)
        idx = quantizer.transform(samples)
        counts = np.bincount(idx, minlength=quantizer.n_bins_)
        order = np.argsort(idx, kind="stable")
        splits = np.split(samples[order], np.cumsum(counts)[:-1])
        return cls(
            bin_samples=splits,
            frequencies=counts / max(len(samples), 1),
            empty_bins=np.flatnonzero(counts == 0),
        )


Weights = Union[str, EmpiricalWeights]


@dataclass
class QuantizationScheme:
    """Bins with representatives, a weight measure and a finite action net."""

    quantizer: StateQuantizer
    action_net: np.ndarray
    weights: Weights = "uniform"
    support: Optional[np.ndarray] = None

    def __post_init__(self):
        check_is_fitted(self.quantizer, "edges_")
        self.action_net = np.asarray(self.action_net, dtype=float)
        if self.action_net.ndim != 1 or len(self.action_net) == 0:
            raise ValueError("action net must be a non-empty list")
        if isinstance(self.weights, str) and self.weights != "uniform":
            raise ValueError(f"unknown weight measure {self.weights!r}")
        if self.support is not None:
            self.support = np.sort(np.asarray(self.support, dtype=float))

    @property
    def n_bins(self) -> int:
        return self.quantizer.n_bins_

    @property
    def edges(self) -> np.ndarray:
        return self.quantizer.edges_

    @classmethod
    def for_model(cls, model: ContinuousModel, n_bins=None, action_net=None,
                  weights: Weights = "uniform", edges=None) -> "QuantizationScheme":
        """Uniform bins over the model's interval, or the identity on a finite support."""
        if model.support is not None and n_bins is None and edges is None:
            quantizer = StateQuantizer.identity(model.support, bounds=model.state_bounds)
        else:
            quantizer = StateQuantizer(n_bins=n_bins or 1, bounds=model.state_bounds,
                                       edges=edges).fit()
        if action_net is None:
            if model.actions is None:
                raise ValueError("a continuous action set needs an explicit action net")
            action_net = model.actions
        return cls(quantizer, np.asarray(action_net, dtype=float), weights,
                   None if model.support is None else np.asarray(model.support))

    def bin_points(self, i: int) -> Optional[np.ndarray]:
        """Support points in bin ``i`` (finite-support models only)."""
        if self.support is None:
            return None
        idx = self.quantizer.transform(self.support)
        return self.support[idx == i]

    def sample_bin(self, i: int, size, rng: np.random.Generator) -> np.ndarray:
        """Draw from the normalized weight measure restricted to bin ``i``."""
        if isinstance(self.weights, EmpiricalWeights):
            pool = self.weights.bin_samples[i]
            if len(pool) == 0:
                raise ValueError(f"bin {i} has no weight-measure samples")
            return pool[rng.integers(len(pool), size=size)]
        pts = self.bin_points(i)
        if pts is not None:
            return pts[rng.integers(len(pts), size=size)]
        lo, hi = self.edges[i], self.edges[i + 1]
        return lo + (hi - lo) * rng.random(size)

    def quantize(self, x):
        """Bin index and representative of ``x``."""
        i = self.quantizer.transform(x)
        return i, self.quantizer.representatives_[i]


def quantize(scheme: QuantizationScheme, x):
    return scheme.quantize(x)


def action_net(lo: float, hi: float, n: int) -> np.ndarray:
    """Uniform grid on ``[lo, hi]`` with spacing at most ``2/n``."""
    n = check_positive_int(n, "n")
    k = int(math.ceil((hi - lo) * n / 2.0 - 1e-12)) + 1
    return np.linspace(lo, hi, max(k, 1))


def covering_radius(net, lo: float, hi: float) -> float:
    """Largest distance from a point of ``[lo, hi]`` to the nearest net element."""
    net = np.sort(np.asarray(net, dtype=float))
    gaps = np.diff(net) / 2.0
    ends = [net[0] - lo, hi - net[-1]]
    return float(max(np.max(gaps, initial=0.0), *ends))


def project_action(u, net) -> np.ndarray:
    """Nearest net element to ``u``; ties go to the smaller action."""
    net = np.sort(np.asarray(net, dtype=float))
    u = np.asarray(u, dtype=float)
    d = np.abs(u[..., None] - net)
    return net[np.argmin(d, axis=-1)]


def _weighted_bin_average(model, scheme, i, a, edges):
    """Exact (C*, P*) row for bin ``i`` and action value ``a``."""
    M = len(edges) - 1
    if isinstance(scheme.weights, EmpiricalWeights):
        xs = scheme.weights.bin_samples[i]
        if len(xs) == 0:
            raise ValueError(f"bin {i} is empty under the empirical weight measure")
    else:
        xs = scheme.bin_points(i)
    if xs is not None:
        c = np.mean(model.cost(xs, a))
        p = np.mean(model.bin_kernel(xs[:, None], a, edges), axis=0)
        return c, p

    lo, hi = edges[i], edges[i + 1]

    def integrand(x):
        out = np.empty(M + 1)
        out[0] = model.cost(x, a)
        out[1:] = model.bin_kernel(x, a, edges)
        return out

    points = None
    if model.kernel_breakpoints is not None:
        bp = np.asarray(model.kernel_breakpoints(a, edges), dtype=float)
        bp = np.unique(bp[(bp > lo) & (bp < hi)])
        points = bp.tolist() or None
    val, _ = quad_vec(integrand, lo, hi, epsabs=QUAD_TOL, epsrel=0.0, points=points,
                      limit=2000)
    val = val / (hi - lo)
    return val[0], val[1:]


def build_finite_model(model: ContinuousModel, scheme: QuantizationScheme,
                       method: str = "exact", samples_per_bin: int = 1000,
                       rng=None) -> FiniteModel:
    """Aggregate ``model`` over the bins of ``scheme``.

    ``method="exact"`` integrates the exact bin kernel against the weight
    measure; ``"monte_carlo"`` draws ``samples_per_bin`` states per cell and
    simulates one transition from each.
    """
    edges = scheme.edges
    net = scheme.action_net
    M, K = scheme.n_bins, len(net)
    cost = np.empty((M, K))
    kernel = np.empty((M, K, M))
    if isinstance(scheme.weights, EmpiricalWeights) and len(scheme.weights.empty_bins):
        raise ValueError(f"empty bins under the empirical weight measure: "
                         f"{scheme.weights.empty_bins.tolist()}")

    if method == "exact":
        if model.bin_kernel is None:
            raise ValueError(f"model {model.name!r} has no exact bin kernel")
        for i in range(M):
            for k, a in enumerate(net):
                cost[i, k], kernel[i, k] = _weighted_bin_average(model, scheme, i, a, edges)
    elif method == "monte_carlo":
        n = check_positive_int(samples_per_bin, "samples_per_bin")
        rng = np.random.default_rng(rng)
        xs = np.stack([scheme.sample_bin(i, (K, n), rng) for i in range(M)])
        us = np.broadcast_to(net[None, :, None], xs.shape)
        cost[:] = model.cost(xs, us).mean(axis=2)
        nxt = np.asarray(model.sampler(xs, us, rng))
        idx = bin_index(edges, nxt)
        flat = (np.arange(M * K)[:, None] * M + idx.reshape(M * K, n)).ravel()
        kernel[:] = np.bincount(flat, minlength=M * K * M).reshape(M, K, M) / n
    else:
        raise ValueError(f"unknown method {method!r}")

    kernel = np.clip(kernel, 0.0, None)
    kernel /= kernel.sum(axis=2, keepdims=True)

    floor = np.zeros(M)
    if model.minorization is not None:
        floor = model.minorization.bin_masses(edges, model.support)
        # Sampled rows may dip below the certified floor; keep the invariant.
        floor = np.minimum(floor, kernel.min(axis=(0, 1)))
    return FiniteModel(cost, kernel, floor, action_values=net.copy())


def loss_bound(scheme: QuantizationScheme) -> float:
    """Worst-case mean in-bin distance ``sup_x int |x - x'| dpi_hat(x')``."""
    edges = scheme.edges
    worst = 0.0
    for i in range(scheme.n_bins):
        lo, hi = edges[i], edges[i + 1]
        if isinstance(scheme.weights, EmpiricalWeights):
            ref = np.asarray(scheme.weights.bin_samples[i], dtype=float)
        else:
            ref = scheme.bin_points(i)
        cand = scheme.bin_points(i)
        if cand is None:
            cand = np.array([lo, hi]) if ref is None else np.concatenate([[lo, hi], ref])
        if ref is None:
            # Uniform weight on [lo, hi]: mean distance is convex in x, largest at an end.
            w = hi - lo
            val = max(((x - lo) ** 2 + (hi - x) ** 2) / (2 * w) for x in cand)
        else:
            if len(ref) == 0:
                continue
            val = float(np.max(np.mean(np.abs(cand[:, None] - ref[None, :]), axis=1)))
        worst = max(worst, val)
    return float(worst)
