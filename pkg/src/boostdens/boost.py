"""The boosting loop: step-size policies, regime detection, sample-size and rate calculators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
from scipy.special import logsumexp

from .dist import BoostedDensity, DiagonalGaussian, push_round
from .errors import RangeError
from .learner import EdgeEstimates, TrainConfig, estimate_edges, properly_scale, train_classifier
from .mcmc import MhConfig, rw_metropolis
from .metrics import GridSpec, coverage_from_values, kl_grid, nll_normalized

__all__ = [
    "REGULAR",
    "CLAMPED",
    "StepPolicy",
    "MU_CLIP",
    "mu_c_sup",
    "step_size_wla",
    "ewla_sample_sizes",
    "predicted_decrease",
    "rate_wla_iterations",
    "geom_boost_factor",
    "MetricsConfig",
    "RoundRecord",
    "BoostTrace",
    "TRACE_COLUMNS",
    "default_sampler_config",
    "evaluation_grid",
    "run_adabode",
]

REGULAR = "regular"
CLAMPED = "clamped"
MU_CLIP = 1e-9
LINESEARCH_POINTS = 10


@dataclass(frozen=True)
class StepPolicy:
    """How alpha_t is chosen: ``wla`` (edge formula), ``fixed`` or ``linesearch_nll``."""

    kind: str = "fixed"
    value: float = 0.5

    def __post_init__(self):
        if self.kind not in ("wla", "fixed", "linesearch_nll"):
            raise ValueError(f"unknown step policy {self.kind!r}")
        if self.kind == "fixed" and not 0.0 <= self.value <= 1.0:
            raise ValueError("fixed step must lie in [0, 1]")

    @classmethod
    def wla(cls) -> "StepPolicy":
        return cls("wla")

    @classmethod
    def fixed(cls, value: float) -> "StepPolicy":
        return cls("fixed", float(value))

    @classmethod
    def linesearch(cls) -> "StepPolicy":
        return cls("linesearch_nll")

    def label(self) -> str:
        return f"fixed({self.value:g})" if self.kind == "fixed" else self.kind


def mu_c_sup(c_sup: float) -> float:
    """Edge level at which the step saturates: ``(e^{2c}-1)/(e^{2c}+1) = tanh(c)``."""
    if not c_sup > 0:
        raise RangeError("c_sup must be positive")
    return math.tanh(c_sup)


def step_size_wla(mu_q_hat: float, c_sup: float) -> tuple[float, str]:
    """``alpha = min(1, log((1+mu)/(1-mu)) / (2 c_sup))``, floored at 0, and its regime.

    ``mu`` is clipped to ``[-1 + 1e-9, 1 - 1e-9]`` first.  The regime is
    ``clamped`` when the unclamped value reaches 1, i.e. when
    ``mu >= tanh(c_sup)``.
    """
    if not c_sup > 0:
        raise RangeError("c_sup must be positive")
    mu = min(max(float(mu_q_hat), -1.0 + MU_CLIP), 1.0 - MU_CLIP)
    raw = math.atanh(mu) / c_sup
    if raw >= 1.0:
        return 1.0, CLAMPED
    return max(0.0, raw), REGULAR


def ewla_sample_sizes(gamma_p: float, gamma_q: float, c_sup: float, T: int, delta: float) -> tuple[int, int]:
    """Sample sizes ``ceil(log(4T/delta) / (kappa* gamma)^2)`` with ``kappa* = mu*(1-mu*)/2``."""
    for name, g in (("gamma_p", gamma_p), ("gamma_q", gamma_q)):
        if not 0.0 < g <= 1.0:
            raise RangeError(f"{name} must lie in (0, 1], got {g}")
    if not 0.0 < delta <= 1.0:
        raise RangeError(f"delta must lie in (0, 1], got {delta}")
    if T < 1:
        raise RangeError("T must be >= 1")
    mu = mu_c_sup(c_sup)
    kappa = mu * (1.0 - mu) / 2.0
    log_term = math.log(4.0 * T / delta)
    return (
        math.ceil(log_term / (kappa * gamma_p) ** 2),
        math.ceil(log_term / (kappa * gamma_q) ** 2),
    )


def predicted_decrease(
    edges: EdgeEstimates, regime: str, form: str = "estimate", delta_hat: Optional[float] = None
) -> float:
    """Guaranteed one-round drop in KL for the given regime.

    ``form="estimate"`` uses the empirical-edge constants, ``form="exact"``
    the true-edge ones:

    * regular: ``k mu_P log((1+mu_Q)/(1-mu_Q))`` with ``k = 1/16`` or ``1/4``;
    * clamped: ``s mu_P c_sup + mu*^2 (b + delta / (1 - mu*^2))`` with
      ``(s, b) = (1/2, 1/4)`` or ``(1, 1/2)``, where ``mu* = tanh(c_sup)``
      and ``delta = mu_Q / mu* - 1`` unless given.
    """
    if form not in ("estimate", "exact"):
        raise ValueError("form must be 'estimate' or 'exact'")
    mu_p, mu_q, c_sup = edges.mu_p_hat, edges.mu_q_hat, edges.c_sup_hat
    if regime == REGULAR:
        mu = min(max(mu_q, -1.0 + MU_CLIP), 1.0 - MU_CLIP)
        k = 1.0 / 16.0 if form == "estimate" else 0.25
        return k * mu_p * math.log((1.0 + mu) / (1.0 - mu))
    if regime == CLAMPED:
        ms = mu_c_sup(c_sup)
        if delta_hat is None:
            delta_hat = mu_q / ms - 1.0
        s, b = (0.5, 0.25) if form == "estimate" else (1.0, 0.5)
        return s * mu_p * c_sup + ms * ms * (b + delta_hat / (1.0 - ms * ms))
    raise ValueError(f"unknown regime {regime!r}")


def rate_wla_iterations(kl0: float, rho: float, gamma_p: float, gamma_q: float) -> float:
    """Rounds after which ``KL(P, Q_T) <= rho`` is guaranteed: ``2 (KL_0 - rho) / (gamma_P gamma_Q)``."""
    if not (gamma_p > 0 and gamma_q > 0):
        raise RangeError("edges must be positive")
    return 2.0 * (kl0 - rho) / (gamma_p * gamma_q)


def geom_boost_factor(gamma_p: float, gamma_q: float, c_sup: float, gamma_eps: float) -> float:
    """Per-round contraction ``1 - min(2, gamma_Q / c_sup) gamma_P / (2 (1 + gamma_eps))``."""
    if not c_sup > 0:
        raise RangeError("c_sup must be positive")
    return 1.0 - min(2.0, gamma_q / c_sup) * gamma_p / (2.0 * (1.0 + gamma_eps))


# --- the boosting loop ---------------------------------------------------


@dataclass(frozen=True)
class MetricsConfig:
    """What to measure after each round.

    ``grid`` is used both for KL and for the normaliser when the dimension
    allows it; ``None`` builds one from the target and q0 extents.
    """

    n_p: int = 1000
    n_q: int = 1000
    n_nll: int = 10_000
    kl: bool = True
    coverage_kappa: Optional[float] = None
    n_coverage: int = 5000
    grid: Optional[GridSpec] = None
    points_per_axis: int = 400
    n_mc_z: int = 100_000


@dataclass
class RoundRecord:
    t: int
    alpha: float
    regime: str
    edges: Optional[EdgeEstimates]
    predicted_delta: float
    kl: Optional[float]
    nll: Optional[float]
    accuracy: Optional[float]
    wla_satisfied: Optional[bool]
    coverage: Optional[float] = None
    mh_acceptance: Optional[float] = None
    test_accuracy_curve: Optional[list] = None


TRACE_COLUMNS = (
    "t",
    "alpha",
    "regime",
    "mu_p_hat",
    "mu_q_hat",
    "c_sup_hat",
    "predicted_delta",
    "kl",
    "nll",
    "accuracy",
    "wla_satisfied",
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class BoostTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        if name in ("mu_p_hat", "mu_q_hat", "c_sup_hat"):
            return [getattr(r.edges, name) if r.edges else None for r in self.records]
        return [getattr(r, name) for r in self.records]

    def rows(self):
        for r in self.records:
            e = r.edges
            yield [
                r.t,
                r.alpha,
                r.regime,
                e.mu_p_hat if e else None,
                e.mu_q_hat if e else None,
                e.c_sup_hat if e else None,
                r.predicted_delta,
                r.kl,
                r.nll,
                r.accuracy,
                r.wla_satisfied,
            ]

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow([_cell(v) for v in row])


def default_sampler_config() -> MhConfig:
    # more chains and thinning than the sampler's own defaults so that the
    # eight well-separated modes are all visited
    return MhConfig(n_samples=1000, burn_in=1000, proposal_std=1.0, n_chains=32, thin=5)


def evaluation_grid(target, q0: DiagonalGaussian, points_per_axis: int = 400) -> GridSpec:
    """Target extent padded by 4 sigma, joined with q0's mean +- 6 std."""
    t_lo, t_hi = target.bounds(4.0)
    q_lo, q_hi = q0.bounds(6.0)
    return GridSpec(tuple(np.minimum(t_lo, q_lo)), tuple(np.maximum(t_hi, q_hi)), points_per_axis)


def _linesearch_alpha(bd: BoostedDensity, clf, train_p: np.ndarray, z_estimator: str, grid, n_mc: int, seed: int) -> float:
    """Grid point in ``linspace(0, 1, 10)`` maximising mean log q_alpha on the P training sample."""
    alphas = np.linspace(0.0, 1.0, LINESEARCH_POINTS)
    if z_estimator == "grid":
        x = grid.points()
        base = bd.log_unnormalized(x)
        c = clf(x)
        log_z = np.array([grid.log_integral(base + a * c) for a in alphas])
    else:
        x = bd.q0.sample(n_mc, np.random.default_rng(seed))
        base = bd.tilt(x)
        c = clf(x)
        log_z = np.array([logsumexp(base + a * c) - math.log(n_mc) for a in alphas])
    lu = bd.log_unnormalized(train_p)
    cp = clf(train_p)
    score = np.array([np.mean(lu + a * cp) for a in alphas]) - log_z
    best = np.flatnonzero(score == score.max())[0]
    return float(alphas[best])


def run_adabode(
    target,
    q0: DiagonalGaussian,
    T: int,
    policy: StepPolicy = StepPolicy(),
    hidden=(5, 5),
    activation: str = "selu",
    learner_cfg: TrainConfig = TrainConfig(),
    sampler_cfg: Optional[MhConfig] = None,
    metrics_cfg: MetricsConfig = MetricsConfig(),
    seed: int = 0,
) -> tuple[BoostedDensity, BoostTrace]:
    """Fit ``Q_T`` to ``target`` by T rounds of classifier boosting.

    Round t draws fresh P-samples and Q_{t-1}-samples (directly from q0 at
    t = 1, by Metropolis-Hastings afterwards), trains a classifier to tell
    them apart, picks alpha_t under ``policy`` and multiplies
    ``exp(alpha_t c_t)`` into the density.  Under the ``wla`` policy the
    classifier is first shrunk to be properly scaled.  Rounds whose edges
    are not both positive are kept and flagged.  The record at index 0
    holds the metrics of q0 itself.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    sampler_cfg = sampler_cfg or default_sampler_config()
    mc = metrics_cfg
    dim = q0.dim
    if dim != target.dim:
        raise ValueError(f"target has dim {target.dim}, q0 has dim {dim}")
    use_grid = dim <= 2
    z_estimator = "grid" if use_grid else "importance_q0"
    grid = mc.grid or (evaluation_grid(target, q0, mc.points_per_axis) if use_grid else None)

    def measure(bd: BoostedDensity, t: int, q_samples=None) -> dict:
        out = {
            "kl": kl_grid(target, bd, grid) if (mc.kl and use_grid) else None,
            "nll": nll_normalized(target, bd, mc.n_nll, seed=_seed(seed, t, 7)),
            "coverage": None,
        }
        if mc.coverage_kappa is not None:
            rng = np.random.default_rng(_seed(seed, t, 8))
            xq = q_samples if q_samples is not None else _sample(bd, mc.n_coverage, sampler_cfg, _seed(seed, t, 9))[0]
            xp = target.sample(mc.n_coverage, rng)
            out["coverage"] = coverage_from_values(bd.log_unnormalized(xq), bd.log_unnormalized(xp), mc.coverage_kappa)
        return out

    bd = BoostedDensity(q0)
    trace = BoostTrace()
    m0 = measure(bd, 0)
    trace.records.append(RoundRecord(0, 0.0, "", None, 0.0, m0["kl"], m0["nll"], None, None, m0["coverage"]))

    for t in range(1, T + 1):
        rng = np.random.default_rng(_seed(seed, t, 0))
        p_samples = target.sample(mc.n_p, rng)
        q_samples, acc_rate = _sample(bd, mc.n_q, sampler_cfg, _seed(seed, t, 1))
        cfg = TrainConfig(**{**learner_cfg.__dict__, "seed": _seed(seed, t, 2)})
        clf, rec = train_classifier(p_samples, q_samples, hidden, activation, cfg)

        edges = estimate_edges(clf, rec.train_p, rec.train_q)
        if policy.kind == "wla":
            clf = properly_scale(clf, edges)
            edges = estimate_edges(clf, rec.train_p, rec.train_q)
        alpha_wla, regime = step_size_wla(edges.mu_q_hat, edges.c_sup_hat)
        if policy.kind == "wla":
            alpha = alpha_wla
        elif policy.kind == "fixed":
            alpha = policy.value
        else:
            alpha = _linesearch_alpha(bd, clf, rec.train_p, z_estimator, grid, mc.n_mc_z, _seed(seed, t, 3))

        bd = push_round(bd, clf, alpha, z_estimator, grid=grid, n_mc=mc.n_mc_z, seed=_seed(seed, t, 4))
        m = measure(bd, t)
        trace.records.append(
            RoundRecord(
                t=t,
                alpha=alpha,
                regime=regime,
                edges=edges,
                predicted_delta=predicted_decrease(edges, regime),
                kl=m["kl"],
                nll=m["nll"],
                accuracy=rec.test_accuracy[-1],
                wla_satisfied=edges.wla_satisfied,
                coverage=m["coverage"],
                mh_acceptance=acc_rate,
                test_accuracy_curve=list(rec.test_accuracy),
            )
        )
    return bd, trace


def _seed(seed: int, t: int, purpose: int) -> int:
    return int(np.random.SeedSequence([seed, t, purpose]).generate_state(1)[0])


def _sample(bd: BoostedDensity, n: int, cfg: MhConfig, seed: int) -> tuple[np.ndarray, Optional[float]]:
    if not bd.rounds:
        return bd.q0.sample(n, np.random.default_rng(seed)), None
    return rw_metropolis(bd.log_unnormalized, bd.dim, cfg.with_overrides(n_samples=n, seed=seed), q0=bd.q0)
