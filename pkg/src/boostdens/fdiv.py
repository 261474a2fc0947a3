"""f-divergences, their Fenchel machinery and the classifier/ratio isomorphisms.

Each divergence is described by four scalar maps: the generator ``f``, its
convex conjugate ``f*``, its derivative ``f'`` and the composition
``f* o f'``.  All maps are vectorised over numpy arrays and reject arguments
outside their open domain instead of clamping them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, xlogy

from .errors import DomainError

__all__ = [
    "Column",
    "DivergenceSpec",
    "DiscreteDistPair",
    "KL",
    "REVERSE_KL",
    "HELLINGER",
    "PEARSON",
    "GAN",
    "DIVERGENCES",
    "get_divergence",
    "eval_table",
    "hellinger_conj_as_printed",
    "f_divergence_discrete",
    "variational_objective",
    "isomorphisms",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]
INF = math.inf


class Column(str, Enum):
    F = "f"
    CONJ = "conj"
    PRIME = "prime"
    CONJ_OF_PRIME = "conj_of_prime"


@dataclass(frozen=True)
class DivergenceSpec:
    """One f-divergence.

    ``dom_f`` is the open interval on which ``f``, ``f_prime`` and
    ``f_conj_of_prime`` are defined; ``dom_conj`` is the open interval of
    ``f_conj``.
    """

    name: str
    f: ArrayFn
    f_conj: ArrayFn
    f_prime: ArrayFn
    f_conj_of_prime: ArrayFn
    dom_f: tuple[float, float]
    dom_conj: tuple[float, float]

    def domain(self, column: Column | str) -> tuple[float, float]:
        return self.dom_conj if Column(column) is Column.CONJ else self.dom_f

    def function(self, column: Column | str) -> ArrayFn:
        col = Column(column)
        return {
            Column.F: self.f,
            Column.CONJ: self.f_conj,
            Column.PRIME: self.f_prime,
            Column.CONJ_OF_PRIME: self.f_conj_of_prime,
        }[col]


def _check_open(x: np.ndarray, lo: float, hi: float, what: str) -> None:
    bad = ~((x > lo) & (x < hi))
    if np.any(bad):
        first = np.asarray(x)[bad].ravel()[0]
        raise DomainError(f"{what}: argument {first!r} outside open interval ({lo}, {hi})")


KL = DivergenceSpec(
    name="KL",
    f=lambda t: t * np.log(t),
    f_conj=lambda s: np.exp(s - 1.0),
    f_prime=lambda t: np.log(t) + 1.0,
    f_conj_of_prime=lambda t: t,
    dom_f=(0.0, INF),
    dom_conj=(-INF, INF),
)

# The generator is -log t: the conjugate -log(-s) - 1 and f' = -1/t in the
# table only belong to this f.
REVERSE_KL = DivergenceSpec(
    name="ReverseKL",
    f=lambda t: -np.log(t),
    f_conj=lambda s: -np.log(-s) - 1.0,
    f_prime=lambda t: -1.0 / t,
    f_conj_of_prime=lambda t: np.log(t) - 1.0,
    dom_f=(0.0, INF),
    dom_conj=(-INF, 0.0),
)

HELLINGER = DivergenceSpec(
    name="Hellinger",
    f=lambda t: (np.sqrt(t) - 1.0) ** 2,
    f_conj=lambda s: s / (1.0 - s),
    f_prime=lambda t: 1.0 - 1.0 / np.sqrt(t),
    f_conj_of_prime=lambda t: np.sqrt(t) - 1.0,
    dom_f=(0.0, INF),
    dom_conj=(-INF, 1.0),
)

PEARSON = DivergenceSpec(
    name="Pearson",
    f=lambda t: (t - 1.0) ** 2,
    f_conj=lambda s: s * (4.0 + s) / 4.0,
    f_prime=lambda t: 2.0 * (t - 1.0),
    f_conj_of_prime=lambda t: t * t - 1.0,
    dom_f=(-INF, INF),
    dom_conj=(-INF, INF),
)

GAN = DivergenceSpec(
    name="GAN",
    f=lambda t: xlogy(t, t) - xlogy(t + 1.0, t + 1.0),
    f_conj=lambda s: -np.log1p(-np.exp(s)),
    f_prime=lambda t: np.log(t) - np.log1p(t),
    f_conj_of_prime=lambda t: np.log1p(t),
    dom_f=(0.0, INF),
    dom_conj=(-INF, 0.0),
)

DIVERGENCES: dict[str, DivergenceSpec] = {
    d.name: d for d in (KL, REVERSE_KL, HELLINGER, PEARSON, GAN)
}


def get_divergence(name: str) -> DivergenceSpec:
    try:
        return DIVERGENCES[name]
    except KeyError:
        raise KeyError(f"unknown divergence {name!r}; choose from {sorted(DIVERGENCES)}") from None


def eval_table(spec: DivergenceSpec, column: Column | str, t):
    """Evaluate one column of the divergence table at ``t`` (scalar or array)."""
    col = Column(column)
    arr = np.asarray(t, dtype=float)
    lo, hi = spec.domain(col)
    _check_open(arr, lo, hi, f"{spec.name}.{col.value}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = spec.function(col)(arr)
    return float(out) if np.ndim(out) == 0 else out


def hellinger_conj_as_printed(s):
    """The Hellinger conjugate in its commonly reproduced printed form, ``3/(s-1) - 1``.

    It disagrees with the true conjugate ``s/(1-s) = -1/(s-1) - 1`` in the
    coefficient of ``1/(s-1)`` and fails the Fenchel-Young equality, so
    ``HELLINGER.f_conj`` does not use it.  Kept for side-by-side comparison.
    """
    s = np.asarray(s, dtype=float)
    _check_open(s, -INF, 1.0, "Hellinger.conj (printed)")
    out = 3.0 / (s - 1.0) - 1.0
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DiscreteDistPair:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 1 or p.shape != q.shape or p.size == 0:
            raise ValueError("p and q must be 1-d vectors of equal, positive length")
        if abs(p.sum() - 1.0) > 1e-12 or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("p and q must each sum to 1 within 1e-12")
        if np.any(p < 0) or np.any(q <= 0):
            raise ValueError("p must be non-negative and q strictly positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def support_size(self) -> int:
        return self.p.size

    @classmethod
    def normalized(cls, p, q) -> "DiscreteDistPair":
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return cls(p / p.sum(), q / q.sum())


def f_divergence_discrete(spec: DivergenceSpec, pair: DiscreteDistPair) -> float:
    """Brute-force ``sum_i q_i f(p_i / q_i)``."""
    ratio = pair.p / pair.q
    return float(np.sum(pair.q * eval_table(spec, Column.F, ratio)))


def _mean(values: np.ndarray, weights: Optional[np.ndarray]) -> float:
    if weights is None:
        return float(np.mean(values))
    return float(np.sum(np.asarray(weights, dtype=float) * values))


def variational_objective(
    spec: DivergenceSpec,
    u_values_on_P: Sequence[float],
    u_values_on_Q: Sequence[float],
    p_weights: Optional[Sequence[float]] = None,
    q_weights: Optional[Sequence[float]] = None,
) -> float:
    """Reparameterised variational objective ``E_P f'(u) - E_Q f*(f'(u))``.

    Without weights the expectations are sample means over the given values.
    With ``p_weights``/``q_weights`` (probability vectors aligned with the
    values) the expectations are exact, which is the entry point used for
    discrete oracles.
    """
    up = np.asarray(u_values_on_P, dtype=float)
    uq = np.asarray(u_values_on_Q, dtype=float)
    if up.size == 0 or uq.size == 0:
        raise ValueError("need at least one u value on each side")
    lo, hi = spec.dom_f
    _check_open(up, lo, hi, f"{spec.name} u on P")
    _check_open(uq, lo, hi, f"{spec.name} u on Q")
    return _mean(spec.f_prime(up), p_weights) - _mean(spec.f_conj_of_prime(uq), q_weights)


def isomorphisms(c):
    """Map a classifier score ``c`` to ``(D, d) = (sigmoid(c), D / (1 - D))``.

    ``1 - D`` is evaluated as ``sigmoid(-c)`` so that ``d == exp(c)`` holds
    to rounding.  For |c| beyond ~709 ``d`` saturates to 0 or inf and ``D``
    to 0 or 1, exactly as float64 ``exp`` and ``expit`` do.
    """
    c = np.asarray(c, dtype=float)
    D = expit(c)
    with np.errstate(divide="ignore", over="ignore"):
        d = D / expit(-c)
    if np.ndim(c) == 0:
        return float(D), float(d)
    return D, d
