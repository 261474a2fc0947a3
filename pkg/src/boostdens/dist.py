"""Target densities and the multiplicatively boosted density Q_t.

A density here is any object with a ``dim`` attribute and a vectorised
``log_density(x)`` taking an ``(n, dim)`` array; direct samplers expose
``sample(n, rng)``.  ``BoostedDensity`` deliberately has no ``sample`` method:
it is sampled by Metropolis-Hastings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

import numpy as np
from scipy.special import logsumexp

from .errors import AlphaRangeError, DimensionError, EstimatorUnavailable, ParseError
from .learner import MlpClassifier
from .metrics import GridSpec

__all__ = [
    "Density",
    "DiagonalGaussian",
    "isotropic_gaussian",
    "GaussianMixture",
    "mixture_ring",
    "mixture_random",
    "Round",
    "BoostedDensity",
    "log_density",
    "push_round",
    "log_z_increment",
    "natural_parameter_view",
    "default_grid",
    "density_to_dict",
    "density_from_dict",
    "save_density",
    "load_density",
]

Z_ESTIMATORS = ("grid", "importance_q0", "mc_prev")
LOG_2PI = math.log(2.0 * math.pi)


class Density(Protocol):
    dim: int

    def log_density(self, x: np.ndarray) -> np.ndarray: ...


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(f"expected points of dim {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class DiagonalGaussian:
    """Gaussian with mean ``mean`` and independent axes of std ``std``."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, samples) -> "DiagonalGaussian":
        """Sample mean and per-axis sample standard deviation."""
        x = np.asarray(samples, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("need an (n, dim) sample with n >= 2")
        return cls(x.mean(axis=0), x.std(axis=0, ddof=1))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, x) -> np.ndarray:
        z = (_points(x, self.dim) - self.mean) / self.std
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(self.std)) - 0.5 * self.dim * LOG_2PI

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((n, self.dim))

    def bounds(self, k: float) -> tuple[np.ndarray, np.ndarray]:
        return self.mean - k * self.std, self.mean + k * self.std


def isotropic_gaussian(mean, sigma: float = 1.0) -> DiagonalGaussian:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return DiagonalGaussian(mean, np.full(mean.shape, float(sigma)))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of isotropic Gaussians ``sum_k w_k N(mean_k, sigma_k^2 I)``."""

    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if means.ndim != 2 or means.shape[0] < 1:
            raise ValueError("means must be a (k, dim) array with k >= 1")
        k = means.shape[0]
        sigmas = np.broadcast_to(np.asarray(self.sigmas, dtype=float), (k,)).copy()
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (k,)).copy()
        if np.any(sigmas <= 0) or np.any(weights <= 0):
            raise ValueError("sigmas and weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_modes(self) -> int:
        return self.means.shape[0]

    def log_density(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        d = self.dim
        sq = np.sum((x[:, None, :] - self.means[None, :, :]) ** 2, axis=2)
        comp = (
            np.log(self.weights)
            - 0.5 * sq / self.sigmas**2
            - d * np.log(self.sigmas)
            - 0.5 * d * LOG_2PI
        )
        return logsumexp(comp, axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = rng.choice(self.n_modes, size=n, p=self.weights)
        return self.means[k] + self.sigmas[k, None] * rng.standard_normal((n, self.dim))

    def bounds(self, k: float) -> tuple[np.ndarray, np.ndarray]:
        pad = k * self.sigmas.max()
        return self.means.min(axis=0) - pad, self.means.max(axis=0) + pad


def mixture_ring(dim: int = 2, modes: int = 8, radius: float = 5.0, sigma: float = 1.0, seed: int = 0) -> GaussianMixture:
    """Equally weighted modes at angles ``2 pi k / modes`` on a circle.

    The layout is deterministic; ``seed`` is accepted for a uniform
    constructor signature.
    """
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if dim != 2:
        raise DimensionError("the ring mixture is defined in two dimensions")
    angles = 2.0 * np.pi * np.arange(modes) / modes
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixture(means, np.full(modes, sigma), np.full(modes, 1.0 / modes))


def mixture_random(
    dim: int = 2, modes: int = 8, box_halfwidth: float = 10.0, sigma: float = 1.0, seed: int = 0
) -> GaussianMixture:
    """Equally weighted modes placed uniformly at random in ``[-b, b]^dim``."""
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if not box_halfwidth > 0:
        raise ValueError("box_halfwidth must be positive")
    rng = np.random.default_rng(seed)
    means = rng.uniform(-box_halfwidth, box_halfwidth, size=(modes, dim))
    return GaussianMixture(means, np.full(modes, sigma), np.full(modes, 1.0 / modes))


@dataclass(frozen=True, eq=False)
class Round:
    classifier: MlpClassifier
    alpha: float
    log_z_cum: float


@dataclass(frozen=True, eq=False)
class BoostedDensity:
    """``q_t(x) = q0(x) exp(sum_i alpha_i c_i(x)) / Z_t``.

    Each round stores the cumulative ``log Z`` after it, so ``log_z`` is the
    last entry (0 with no rounds, since q0 is normalised).
    """

    q0: DiagonalGaussian
    rounds: tuple[Round, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rounds", tuple(self.rounds))

    @property
    def dim(self) -> int:
        return self.q0.dim

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.rounds], dtype=float)

    @property
    def log_z(self) -> float:
        return self.rounds[-1].log_z_cum if self.rounds else 0.0

    def scores(self, x) -> np.ndarray:
        """``(n, t)`` matrix of classifier outputs ``c_i(x)``."""
        x = _points(x, self.dim)
        if not self.rounds:
            return np.zeros((x.shape[0], 0))
        return np.stack([r.classifier(x) for r in self.rounds], axis=1)

    def tilt(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        out = np.zeros(x.shape[0])
        for r in self.rounds:
            if r.alpha != 0.0:
                out += r.alpha * r.classifier(x)
        return out

    def log_unnormalized(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        return self.q0.log_density(x) + self.tilt(x)

    def log_density(self, x) -> np.ndarray:
        return self.log_unnormalized(x) - self.log_z


def log_density(density, x):
    """Log-density at one point (returns a float) or at each row of a matrix."""
    arr = np.asarray(x, dtype=float)
    out = density.log_density(arr)
    return float(out[0]) if arr.ndim == 1 else out


def natural_parameter_view(bd: BoostedDensity, x):
    """``(alpha, c(x), C(alpha))`` with ``log q_t = <alpha, c(x)> - C(alpha) + log q0``.

    For a single point ``c(x)`` is a vector of length t; for a matrix of
    points it is ``(n, t)``.
    """
    arr = np.asarray(x, dtype=float)
    c = bd.scores(arr)
    if arr.ndim == 1:
        c = c[0]
    return bd.alphas, c, bd.log_z


def default_grid(bd: BoostedDensity, points_per_axis: int = 400) -> GridSpec:
    lo, hi = bd.q0.bounds(8.0)
    return GridSpec(tuple(lo), tuple(hi), points_per_axis)


def _mean_exp(log_w: np.ndarray) -> tuple[float, float]:
    """``log mean exp(log_w)`` and its delta-method standard error."""
    n = log_w.size
    lm = float(logsumexp(log_w) - math.log(n))
    w = np.exp(log_w - lm)
    se = float(np.std(w, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return lm, se


def log_z_increment(
    bd: BoostedDensity,
    classifier,
    alpha: float,
    z_estimator: str = "grid",
    grid: Optional[GridSpec] = None,
    samples: Optional[np.ndarray] = None,
    n_mc: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Cumulative ``log Z`` after appending ``(classifier, alpha)``, with a standard error.

    ``grid`` integrates the full unnormalised product by midpoint quadrature
    (standard error 0).  ``importance_q0`` averages ``exp(sum alpha_i c_i)``
    over draws from q0.  ``mc_prev`` multiplies the previous normaliser by
    the mean of ``d^alpha = exp(alpha c)`` over draws from the current
    density, taken from ``samples`` when given and otherwise drawn from q0
    (no rounds yet) or by Metropolis-Hastings.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaRangeError(f"alpha must lie in [0, 1], got {alpha}")
    if z_estimator not in Z_ESTIMATORS:
        raise ValueError(f"unknown estimator {z_estimator!r}; choose from {Z_ESTIMATORS}")
    if alpha == 0.0:
        return bd.log_z, 0.0

    if z_estimator == "grid":
        if bd.dim > 2:
            raise EstimatorUnavailable("grid normaliser needs dim <= 2; use importance_q0 or mc_prev")
        grid = grid or default_grid(bd)
        x = grid.points()
        return grid.log_integral(bd.log_unnormalized(x) + alpha * classifier(x)), 0.0

    rng = np.random.default_rng(seed)
    if z_estimator == "importance_q0":
        x = bd.q0.sample(n_mc, rng) if samples is None else _points(samples, bd.dim)
        return _mean_exp(bd.tilt(x) + alpha * classifier(x))

    if samples is None:
        if not bd.rounds:
            samples = bd.q0.sample(n_mc, rng)
        else:
            from .mcmc import MhConfig, rw_metropolis

            samples, _ = rw_metropolis(
                bd.log_unnormalized, bd.dim, MhConfig(n_samples=n_mc, seed=seed), q0=bd.q0
            )
    lm, se = _mean_exp(alpha * classifier(_points(samples, bd.dim)))
    return bd.log_z + lm, se


def push_round(
    bd: BoostedDensity,
    classifier,
    alpha: float,
    z_estimator: str = "grid",
    grid: Optional[GridSpec] = None,
    samples: Optional[np.ndarray] = None,
    n_mc: int = 100_000,
    seed: int = 0,
) -> BoostedDensity:
    """Return a new density with the round ``exp(alpha c)`` appended and renormalised."""
    log_z, _ = log_z_increment(bd, classifier, alpha, z_estimator, grid, samples, n_mc, seed)
    return replace(bd, rounds=bd.rounds + (Round(classifier, float(alpha), float(log_z)),))


# --- JSON snapshots -------------------------------------------------------


def density_to_dict(density) -> dict:
    if isinstance(density, DiagonalGaussian):
        return {"type": "gaussian", "mean": density.mean.tolist(), "std": density.std.tolist()}
    if isinstance(density, GaussianMixture):
        return {
            "type": "mixture",
            "means": density.means.tolist(),
            "sigmas": density.sigmas.tolist(),
            "weights": density.weights.tolist(),
        }
    if isinstance(density, BoostedDensity):
        return {
            "type": "boosted",
            "q0": density_to_dict(density.q0),
            "rounds": [
                {"classifier": r.classifier.to_dict(), "alpha": r.alpha, "log_z_cum": r.log_z_cum}
                for r in density.rounds
            ],
        }
    raise TypeError(f"cannot serialise {type(density).__name__}")


def density_from_dict(d: dict):
    try:
        kind = d["type"]
        if kind == "gaussian":
            return DiagonalGaussian(np.asarray(d["mean"], float), np.asarray(d["std"], float))
        if kind == "mixture":
            return GaussianMixture(
                np.asarray(d["means"], float), np.asarray(d["sigmas"], float), np.asarray(d["weights"], float)
            )
        if kind == "boosted":
            rounds = tuple(
                Round(MlpClassifier.from_dict(r["classifier"]), float(r["alpha"]), float(r["log_z_cum"]))
                for r in d["rounds"]
            )
            return BoostedDensity(density_from_dict(d["q0"]), rounds)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed density snapshot: {exc}") from exc
    raise ParseError(f"unknown density type {kind!r}")


def save_density(density, path) -> None:
    with open(path, "w") as fh:
        json.dump(density_to_dict(density), fh)


def load_density(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ParseError(f"{path}: snapshot must be a JSON object")
    return density_from_dict(d)
