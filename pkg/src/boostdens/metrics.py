"""Evaluation metrics: grid KL, normalised NLL, classifier accuracy and coverage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, NonFiniteLogDensity, RangeError

__all__ = [
    "LOG_FLOOR",
    "GridSpec",
    "grid_around",
    "kl_grid",
    "nll_normalized",
    "nll_ratio_on",
    "accuracy",
    "coverage",
    "coverage_from_values",
]

# Lower clip applied to log-densities inside quadrature.
LOG_FLOOR = -700.0


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned midpoint grid on ``[lo, hi]`` in one or two dimensions."""

    lo: tuple
    hi: tuple
    points_per_axis: int = 400

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise DimensionError("lo and hi must have the same length")
        if len(lo) > 2:
            raise DimensionError("grid quadrature is restricted to dim <= 2")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("need lo < hi componentwise")
        if self.points_per_axis < 16:
            raise ValueError("points_per_axis must be at least 16")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def cell_volume(self) -> float:
        n = self.points_per_axis
        return float(np.prod([(b - a) / n for a, b in zip(self.lo, self.hi)]))

    def axes(self) -> list[np.ndarray]:
        n = self.points_per_axis
        out = []
        for a, b in zip(self.lo, self.hi):
            h = (b - a) / n
            out.append(a + h * (np.arange(n) + 0.5))
        return out

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def log_integral(self, log_f_values: np.ndarray) -> float:
        """``log sum exp(log f) * cell_volume`` -- midpoint rule in log space."""
        from scipy.special import logsumexp

        return float(logsumexp(log_f_values) + np.log(self.cell_volume))

    def union(self, other: "GridSpec") -> "GridSpec":
        return GridSpec(
            tuple(min(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(max(a, b) for a, b in zip(self.hi, other.hi)),
            max(self.points_per_axis, other.points_per_axis),
        )


def grid_around(lo, hi, pad: float, points_per_axis: int = 400) -> GridSpec:
    lo = np.atleast_1d(np.asarray(lo, dtype=float)) - pad
    hi = np.atleast_1d(np.asarray(hi, dtype=float)) + pad
    return GridSpec(tuple(lo), tuple(hi), points_per_axis)


def _log_density(density, x: np.ndarray) -> np.ndarray:
    return np.asarray(density.log_density(x), dtype=float)


def kl_grid(p, q, grid: GridSpec) -> float:
    """Midpoint-rule quadrature of ``p log(p/q)`` over ``grid``."""
    if p.dim > 2 or q.dim > 2:
        raise DimensionError("KL by grid quadrature is only available for dim <= 2")
    if grid.dim != p.dim:
        raise DimensionError(f"grid has dim {grid.dim}, densities have dim {p.dim}")
    x = grid.points()
    lp = np.maximum(_log_density(p, x), LOG_FLOOR)
    lq = np.maximum(_log_density(q, x), LOG_FLOOR)
    return float(np.sum(np.exp(lp) * (lp - lq)) * grid.cell_volume)


def nll_ratio_on(p, q, samples: np.ndarray) -> float:
    """``mean log q / mean log p`` over the given points (1 is ideal)."""
    lq = _log_density(q, samples)
    if not np.all(np.isfinite(lq)):
        raise NonFiniteLogDensity("model assigns a non-finite log-density to a target sample")
    lp = _log_density(p, samples)
    denom = float(np.mean(lp))
    if abs(denom) < 1e-3:
        raise RangeError("normalised NLL undefined: |E_P log p| < 1e-3")
    return float(np.mean(lq)) / denom


def nll_normalized(p, q, n: int, seed: int = 0) -> float:
    """Normalised negative log-likelihood ``E_P log q / E_P log p`` from ``n`` fresh P-draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = p.sample(n, np.random.default_rng(seed))
    return nll_ratio_on(p, q, x)


def accuracy(classifier, p_samples, q_samples) -> float:
    """Balanced accuracy under the rule ``c > 0`` means "from P"."""
    p = np.asarray(p_samples, dtype=float)
    q = np.asarray(q_samples, dtype=float)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("accuracy needs samples from both P and Q")
    return 0.5 * (float(np.mean(classifier(p) > 0)) + float(np.mean(classifier(q) <= 0)))


def coverage_from_values(values_on_q: np.ndarray, values_on_p: np.ndarray, kappa: float) -> float:
    """Fraction of ``values_on_p`` above the level carrying mass ``kappa`` of Q.

    The level is the linearly interpolated ``(1 - kappa)`` quantile of the
    values taken on Q-draws.  Any strictly increasing transform of the
    density values can be passed.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    beta = np.quantile(np.asarray(values_on_q, dtype=float), 1.0 - kappa)
    return float(np.mean(np.asarray(values_on_p, dtype=float) > beta))


def _draw(density, n: int, rng: np.random.Generator, mh_config=None) -> np.ndarray:
    if hasattr(density, "sample"):
        return density.sample(n, rng)
    from .mcmc import MhConfig, rw_metropolis

    cfg = mh_config or MhConfig(n_samples=n, seed=int(rng.integers(2**31)))
    cfg = cfg.with_overrides(n_samples=n)
    samples, _ = rw_metropolis(density.log_unnormalized, density.dim, cfg, q0=getattr(density, "q0", None))
    return samples


def coverage(
    p,
    q,
    kappa: float = 0.95,
    n_q: int = 10_000,
    n_p: int = 10_000,
    seed: int = 0,
    q_samples: Optional[np.ndarray] = None,
    mh_config=None,
) -> float:
    """Coverage ``C_kappa(P, Q)``: P-mass of the smallest-density region holding Q-mass kappa.

    Q is sampled directly when it has a sampler and by random-walk
    Metropolis otherwise; pre-drawn ``q_samples`` skip that step.
    """
    rng = np.random.default_rng(seed)
    xq = q_samples if q_samples is not None else _draw(q, n_q, rng, mh_config)
    xp = p.sample(n_p, rng)
    return coverage_from_values(_log_density(q, xq), _log_density(q, xp), kappa)
