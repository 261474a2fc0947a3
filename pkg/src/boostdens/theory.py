"""Brute-force numeric checks of the convergence bounds on finite supports.

Every check computes both sides of an inequality exactly on a discrete
instance and reports the slack ``rhs - lhs``.  A trial counts as a
violation when the slack is below ``-tol * max(1, |lhs|, |rhs|)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateRange, PreconditionUnmet
from .fdiv import (
    DIVERGENCES,
    DiscreteDistPair,
    f_divergence_discrete,
    hellinger_conj_as_printed,
    variational_objective,
)

__all__ = [
    "DiscreteBoostInstance",
    "CheckReport",
    "TrialResult",
    "discrete_kl",
    "random_instance",
    "check_kl_bound",
    "check_corollary_qt_rt",
    "check_rn_inequality",
    "rn_slack",
    "check_reverse_jensen",
    "reverse_jensen_slack",
    "bregman_exp_chord_bound",
    "check_bregbound",
    "check_lemma_wla",
    "lemma_wla_slack",
    "is_properly_scaled",
    "check_regime_theorems",
    "wda_mu_epsilon",
    "wda_satisfied",
    "make_ps_instance",
    "make_clamped_instance",
    "run_theory_suite",
    "suite_to_json",
]

DEFAULT_TOL = 1e-9


def discrete_kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


@dataclass(frozen=True, eq=False)
class DiscreteBoostInstance:
    """P and Q_{t-1} on a finite support, a candidate ratio update ``d`` and a step ``alpha``."""

    pair: DiscreteDistPair
    d: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.shape != self.pair.p.shape or np.any(d <= 0):
            raise ValueError("d must be a positive vector on the same support")
        object.__setattr__(self, "d", d)

    @classmethod
    def from_scores(cls, p, q, c, alpha: float = 1.0) -> "DiscreteBoostInstance":
        return cls(DiscreteDistPair(np.asarray(p, float), np.asarray(q, float)), np.exp(np.asarray(c, float)), alpha)

    @property
    def p(self) -> np.ndarray:
        return self.pair.p

    @property
    def q(self) -> np.ndarray:
        return self.pair.q

    @property
    def c(self) -> np.ndarray:
        return np.log(self.d)

    @property
    def c_sup(self) -> float:
        return float(np.max(np.abs(self.c)))

    @property
    def epsilon(self) -> np.ndarray:
        """Error term ``d q / p``: how far ``d`` is from the exact ratio ``p / q``."""
        return self.d * self.q / self.p

    def d_from_epsilon(self) -> np.ndarray:
        return self.epsilon * self.p / self.q

    def kl_prev(self) -> float:
        return discrete_kl(self.p, self.q)

    def q_next(self, alpha: Optional[float] = None) -> np.ndarray:
        a = self.alpha if alpha is None else alpha
        log_w = np.log(self.q) + a * self.c
        w = np.exp(log_w - log_w.max())
        return w / w.sum()

    def kl_next(self, alpha: Optional[float] = None) -> float:
        return discrete_kl(self.p, self.q_next(alpha))

    def edges(self, c_sup: Optional[float] = None) -> tuple[float, float]:
        cs = self.c_sup if c_sup is None else c_sup
        return float(self.p @ self.c) / cs, float(-(self.q @ self.c)) / cs

    def scaled(self, eta: float) -> "DiscreteBoostInstance":
        return DiscreteBoostInstance(self.pair, self.d**eta, self.alpha)


@dataclass(frozen=True)
class TrialResult:
    holds: bool
    slack: float


@dataclass
class CheckReport:
    name: str
    n_trials: int = 0
    n_violations: int = 0
    worst_slack: float = math.inf
    tolerance: float = DEFAULT_TOL
    negative_control_detected: Optional[bool] = None
    skipped: int = 0
    note: str = ""

    def add(self, result: TrialResult) -> None:
        self.n_trials += 1
        self.n_violations += int(not result.holds)
        self.worst_slack = min(self.worst_slack, result.slack)

    @property
    def passed(self) -> bool:
        return self.n_trials > 0 and self.n_violations == 0 and self.negative_control_detected is not False


def _result(lhs: float, rhs: float, tol: float) -> TrialResult:
    slack = rhs - lhs
    return TrialResult(slack >= -tol * max(1.0, abs(lhs), abs(rhs)), float(slack))


# --- instance generation ---------------------------------------------------


def _simplex(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.dirichlet(np.ones(n))
    x = np.maximum(x, 1e-300)
    return x / x.sum()


def random_instance(rng: np.random.Generator, min_support: int = 2, max_support: int = 10) -> DiscreteBoostInstance:
    """Dirichlet(1) P and Q, ``d`` log-uniform on ``[e^-2, e^2]``, alpha uniform on [0, 1]."""
    n = int(rng.integers(min_support, max_support + 1))
    pair = DiscreteDistPair(_simplex(rng, n), _simplex(rng, n))
    d = np.exp(rng.uniform(-2.0, 2.0, n))
    return DiscreteBoostInstance(pair, d, float(rng.uniform(0.0, 1.0)))


def _informative_instance(rng: np.random.Generator) -> DiscreteBoostInstance:
    """``d = (p/q)^s`` times log-uniform noise, so edges are usually positive."""
    n = int(rng.integers(2, 11))
    p, q = _simplex(rng, n), _simplex(rng, n)
    s = rng.uniform(0.2, 1.5)
    noise = rng.uniform(-0.5, 0.5, n)
    c = np.clip(s * np.log(p / q) + noise, -30.0, 30.0)
    return DiscreteBoostInstance(DiscreteDistPair(p, q), np.exp(c), 1.0)


def is_properly_scaled(inst: DiscreteBoostInstance) -> bool:
    mu_p, _ = inst.edges()
    cs = inst.c_sup
    ps1 = math.exp(2.0 * cs) <= 2.0 + mu_p * cs
    ps2 = float(inst.q @ inst.d) <= math.exp(mu_p * cs / 4.0)
    return ps1 and ps2


def make_ps_instance(rng: np.random.Generator, max_draws: int = 1000) -> DiscreteBoostInstance:
    """Instance with positive edges, in the regular regime, made properly scaled by shrinking ``c``.

    Draws are rejected until positive edges are found; ``c`` is then scaled
    by ``0.9^k`` until both scaling conditions hold.
    """
    for _ in range(max_draws):
        inst = _informative_instance(rng)
        mu_p, mu_q = inst.edges()
        if not (mu_p > 0 and mu_q > 0):
            continue
        for _ in range(400):
            if is_properly_scaled(inst):
                break
            inst = inst.scaled(0.9)
        else:
            continue
        if mu_q < math.tanh(inst.c_sup):
            return inst
    raise PreconditionUnmet("no properly scaled regular-regime instance found")


def make_clamped_instance(rng: np.random.Generator, max_draws: int = 1000) -> DiscreteBoostInstance:
    """Instance with ``mu_Q >= tanh(c_sup)``, obtained by shrinking ``c`` below ``atanh(mu_Q)``."""
    for _ in range(max_draws):
        inst = _informative_instance(rng)
        _, mu_q = inst.edges()
        if not 0.0 < mu_q < 1.0:
            continue
        target = math.atanh(mu_q) * rng.uniform(0.05, 1.0)
        inst = inst.scaled(target / inst.c_sup)
        if inst.edges()[1] >= math.tanh(inst.c_sup):
            return inst
    raise PreconditionUnmet("no clamped-regime instance found")


# --- individual checks -----------------------------------------------------


def check_kl_bound(inst: DiscreteBoostInstance, tol: float = DEFAULT_TOL) -> TrialResult:
    """``KL(P, Q_t) <= (1-a) KL(P, Q_{t-1}) + a (log E_P eps - E_P log eps)``."""
    a = inst.alpha
    eps = inst.epsilon
    rhs = (1.0 - a) * inst.kl_prev() + a * (math.log(float(inst.p @ eps)) - float(inst.p @ np.log(eps)))
    return _result(inst.kl_next(), rhs, tol)


def kl_to_r(inst: DiscreteBoostInstance) -> float:
    """KL from P to the normalised ``eps p``."""
    r = inst.epsilon * inst.p
    return discrete_kl(inst.p, r / r.sum())


def check_corollary_qt_rt(inst: DiscreteBoostInstance, gamma: float, tol: float = DEFAULT_TOL) -> TrialResult:
    """``KL(P, Q_t) <= (1 - a(1 - gamma)) KL(P, Q_{t-1})`` given ``KL(P, R) <= gamma KL(P, Q_{t-1})``."""
    kl0 = inst.kl_prev()
    if kl_to_r(inst) > gamma * kl0 + tol * max(1.0, kl0):
        raise PreconditionUnmet("KL(P, R) exceeds gamma KL(P, Q)")
    return _result(inst.kl_next(), (1.0 - inst.alpha * (1.0 - gamma)) * kl0, tol)


def rn_slack(a: float, b: float) -> float:
    rhs = 1.0 - a * b
    lhs = math.sqrt(1.0 - a * a) * math.exp(-0.5 * b * math.log((1.0 + a) / (1.0 - a)))
    return rhs - lhs


def check_rn_inequality(a: float, b: float, tol: float = 1e-12) -> bool:
    """``1 - ab >= sqrt(1 - a^2) exp(-(b/2) log((1+a)/(1-a)))``, valid for |a| < 1 and |b| <= 1."""
    if not abs(a) < 1.0:
        raise ValueError("need |a| < 1")
    return rn_slack(a, b) >= -tol


def _bregman_exp(x: float, y: float) -> float:
    return math.exp(x) - math.exp(y) - math.exp(y) * (x - y)


def reverse_jensen_slack(c_values, q_weights, lo: Optional[float] = None, hi: Optional[float] = None) -> tuple[float, float]:
    """``(I, bound)`` for the exponential Bregman information of ``c`` under ``q``.

    ``I = E e^c - e^{E c}`` and ``bound = D_exp(hi || log((e^lo - e^hi)/(lo - hi)))``,
    with ``[lo, hi]`` defaulting to the range of ``c``.
    """
    c = np.asarray(c_values, dtype=float)
    w = np.asarray(q_weights, dtype=float)
    a = float(c.min()) if lo is None else lo
    b = float(c.max()) if hi is None else hi
    if a == b:
        raise DegenerateRange("c is constant: the Bregman information is 0")
    info = float(w @ np.exp(c)) - math.exp(float(w @ c))
    u_star = math.log((math.exp(a) - math.exp(b)) / (a - b))
    return info, _bregman_exp(b, u_star)


def check_reverse_jensen(c_values, q_weights, tol: float = DEFAULT_TOL) -> bool:
    info, bound = reverse_jensen_slack(c_values, q_weights)
    return _result(info, bound, tol).holds


def bregman_exp_chord_bound(z: float) -> float:
    """``e^z (1/2 - 1/(2z)) + e^-z (1/2 + 1/(2z)) + s log s`` with ``s = sinh(z)/z`` (0 at z = 0)."""
    if z == 0.0:
        return 0.0
    s = math.sinh(z) / z
    return math.exp(z) * (0.5 - 0.5 / z) + math.exp(-z) * (0.5 + 0.5 / z) + s * math.log(s)


def check_bregbound(z: float, tol: float = DEFAULT_TOL) -> bool:
    """Is the chord bound at most ``z^2``?  Guaranteed for |z| <= 2 only."""
    return _result(bregman_exp_chord_bound(z), z * z, tol).holds


def lemma_wla_slack(c_values, q_weights, c_sup: float) -> tuple[float, float]:
    """``(E_Q exp(alpha c), sqrt(1 - mu_Q^2))`` with the unclamped WLA step alpha."""
    c = np.asarray(c_values, dtype=float)
    w = np.asarray(q_weights, dtype=float)
    mu_q = float(-(w @ c)) / c_sup
    if not -1.0 < mu_q < 1.0:
        raise ValueError("mu_Q must lie in (-1, 1)")
    alpha = math.atanh(mu_q) / c_sup
    return float(w @ np.exp(alpha * c)), math.sqrt(1.0 - mu_q * mu_q)


def check_lemma_wla(c_values, q_weights, c_sup: float, tol: float = DEFAULT_TOL) -> bool:
    lhs, rhs = lemma_wla_slack(c_values, q_weights, c_sup)
    return _result(lhs, rhs, tol).holds


def check_regime_theorems(
    inst: DiscreteBoostInstance, regime: str, tol: float = DEFAULT_TOL, c_sup: Optional[float] = None
) -> TrialResult:
    """One-round decrease ``KL(P, Q_t) <= KL(P, Q_{t-1}) - Delta`` with the exact-edge Delta.

    The step is the WLA formula ``min(1, atanh(mu_Q) / c_sup)``.  Passing a
    ``c_sup`` below ``max |c|`` breaks the boundedness hypothesis and is
    used as a negative control.
    """
    cs = inst.c_sup if c_sup is None else c_sup
    mu_p, mu_q = inst.edges(cs)
    ms = math.tanh(cs)
    if regime == "regular":
        if not -1.0 < mu_q < 1.0:
            raise PreconditionUnmet("mu_Q outside (-1, 1)")
        alpha = min(1.0, math.atanh(mu_q) / cs)
        delta = 0.25 * mu_p * math.log((1.0 + mu_q) / (1.0 - mu_q))
    elif regime == "clamped":
        alpha = 1.0
        dlt = mu_q / ms - 1.0
        delta = mu_p * cs + ms * ms * (0.5 + dlt / (1.0 - ms * ms))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    kl0 = inst.kl_prev()
    return _result(inst.kl_next(alpha), kl0 - delta, tol)


def wda_mu_epsilon(inst: DiscreteBoostInstance) -> tuple[float, float]:
    """``mu_eps = E_P log eps / c_sup`` and the residual of ``mu_P = KL / c_sup + mu_eps``."""
    cs = inst.c_sup
    mu_eps = float(inst.p @ np.log(inst.epsilon)) / cs
    mu_p, _ = inst.edges()
    return mu_eps, mu_p - (inst.kl_prev() / cs + mu_eps)


def wda_satisfied(inst: DiscreteBoostInstance, gamma_eps: float) -> bool:
    return wda_mu_epsilon(inst)[0] >= -gamma_eps


# --- the suite -------------------------------------------------------------


def _battery(name: str, n: int, trial: Callable[[np.random.Generator], TrialResult], rng, negative: Callable[[], bool], tol) -> CheckReport:
    rep = CheckReport(name, tolerance=tol)
    for _ in range(n):
        rep.add(trial(rng))
    rep.negative_control_detected = bool(negative())
    return rep


def _variational_trial(rng: np.random.Generator, tol: float) -> TrialResult:
    inst = random_instance(rng)
    worst = math.inf
    ok = True
    for spec in DIVERGENCES.values():
        pair = inst.pair
        u = pair.p / pair.q
        exact = f_divergence_discrete(spec, pair)
        j = variational_objective(spec, u, u, p_weights=pair.p, q_weights=pair.q)
        tight = abs(j - exact) <= 1e-10 * max(1.0, abs(exact))
        pert = u * np.exp(rng.uniform(-0.5, 0.5, u.size))
        jp = variational_objective(spec, pert, pert, p_weights=pair.p, q_weights=pair.q)
        rb = _result(jp, exact, tol)
        ok &= tight and rb.holds
        worst = min(worst, rb.slack)
    return TrialResult(ok, worst)


def run_theory_suite(seed: int = 0, n_trials: int = 1000, tol: float = DEFAULT_TOL) -> list[CheckReport]:
    """Run every battery with its negative control; deterministic in ``seed``."""
    ss = np.random.SeedSequence(seed)
    rngs = iter([np.random.default_rng(s) for s in ss.spawn(16)])
    reports = []

    reports.append(_battery(
        "kl_bound", n_trials, lambda r: check_kl_bound(random_instance(r), tol), next(rngs),
        lambda: not check_kl_bound(_exact_ratio_instance(1.5), tol).holds, tol,
    ))

    def corollary_trial(r):
        for _ in range(10_000):
            inst = _informative_instance(r)
            inst = DiscreteBoostInstance(inst.pair, inst.d, float(r.uniform(0.0, 1.0)))
            kl0 = inst.kl_prev()
            if kl0 <= 0:
                continue
            gamma = float(r.uniform(0.0, 1.0))
            if kl_to_r(inst) <= gamma * kl0:
                return check_corollary_qt_rt(inst, gamma, tol)
        raise PreconditionUnmet("no instance with KL(P, R) <= gamma KL(P, Q) found")

    reports.append(_battery(
        "corollary_qt_rt", n_trials, corollary_trial, next(rngs),
        lambda: not check_corollary_qt_rt(_exact_ratio_instance(1.5), 0.0, tol).holds, tol,
    ))

    rn = CheckReport("rn_inequality", tolerance=1e-12)
    grid = np.round(np.arange(-0.99, 0.99 + 1e-9, 0.01), 2)
    for a in grid:
        for b in grid:
            rn.add(TrialResult(check_rn_inequality(a, b), rn_slack(a, b)))
    r = next(rngs)
    for _ in range(n_trials):
        a, b = r.uniform(-0.999, 0.999), r.uniform(-1.0, 1.0)
        rn.add(TrialResult(check_rn_inequality(a, b), rn_slack(a, b)))
    rn.negative_control_detected = not check_rn_inequality(0.5, 3.0)
    reports.append(rn)

    def rj_trial(r):
        n = int(r.integers(2, 11))
        c = r.uniform(-2.0, 2.0, n)
        info, bound = reverse_jensen_slack(c, _simplex(r, n))
        return _result(info, bound, tol)

    def rj_negative():
        info, bound = reverse_jensen_slack([-2.0, 2.0], [0.5, 0.5], lo=-0.1, hi=0.1)
        return not _result(info, bound, tol).holds

    reports.append(_battery("reverse_jensen", n_trials, rj_trial, next(rngs), rj_negative, tol))

    bb = CheckReport("bregbound", tolerance=tol)
    for z in np.linspace(-2.0, 2.0, 4001):
        bb.add(_result(bregman_exp_chord_bound(float(z)), float(z * z), tol))
    bb.negative_control_detected = not check_bregbound(3.0, tol)
    reports.append(bb)

    def wla_trial(r):
        n = int(r.integers(2, 11))
        cs = float(math.exp(r.uniform(-2.0, 1.0)))
        c = r.uniform(-cs, cs, n)
        lhs, rhs = lemma_wla_slack(c, _simplex(r, n), cs)
        return _result(lhs, rhs, tol)

    reports.append(_battery(
        "lemma_wla", n_trials, wla_trial, next(rngs),
        lambda: not check_lemma_wla([-3.0, 1.0], [0.5, 0.5], 1.5, tol), tol,
    ))

    neg = DiscreteBoostInstance.from_scores([0.5, 0.5], [0.25, 0.75], np.log([2.0, 2.0 / 3.0]))
    reports.append(_battery(
        "regime_regular", n_trials, lambda r: check_regime_theorems(make_ps_instance(r), "regular", tol), next(rngs),
        lambda: not check_regime_theorems(neg, "regular", tol, c_sup=0.3 * neg.c_sup).holds, tol,
    ))
    neg_c = neg.scaled(0.2)
    reports.append(_battery(
        "regime_clamped", n_trials, lambda r: check_regime_theorems(make_clamped_instance(r), "clamped", tol), next(rngs),
        lambda: not check_regime_theorems(neg_c, "clamped", tol, c_sup=0.3 * neg_c.c_sup).holds, tol,
    ))

    def wda_trial(r):
        _, resid = wda_mu_epsilon(random_instance(r))
        return _result(abs(resid), 0.0, 1e-12)

    def wda_negative():
        # mu_P measured on a different classifier than the one defining eps breaks the identity
        inst = _exact_ratio_instance(1.0)
        other = DiscreteBoostInstance(inst.pair, inst.d * np.array([1.0, 1.0, 1.5]))
        mu_p_wrong = other.edges(inst.c_sup)[0]
        mu_eps, _ = wda_mu_epsilon(inst)
        return abs(mu_p_wrong - (inst.kl_prev() / inst.c_sup + mu_eps)) > 1e-12

    reports.append(_battery("wda_identity", n_trials, wda_trial, next(rngs), wda_negative, 1e-12))

    def roundtrip_trial(r):
        inst = random_instance(r)
        err = float(np.max(np.abs(inst.d_from_epsilon() - inst.d) / inst.d))
        return _result(err, 0.0, 1e-14)

    def roundtrip_negative():
        inst = _exact_ratio_instance(1.0)
        wrong = inst.epsilon * inst.p / np.array([0.6, 0.2, 0.2])
        return float(np.max(np.abs(wrong - inst.d) / inst.d)) > 1e-14

    reports.append(_battery("error_term_roundtrip", n_trials, roundtrip_trial, next(rngs), roundtrip_negative, 1e-14))

    def var_negative():
        # the misprinted Hellinger conjugate is not a conjugate, so J overshoots I_f
        pair = DiscreteDistPair(np.array([0.5, 0.5]), np.array([0.25, 0.75]))
        u = pair.p / pair.q
        hel = DIVERGENCES["Hellinger"]
        exact = f_divergence_discrete(hel, pair)
        j = float(pair.p @ hel.f_prime(u)) - float(pair.q @ hellinger_conj_as_printed(hel.f_prime(u)))
        return not _result(j, exact, tol).holds

    reports.append(_battery("variational_bound", n_trials, lambda r: _variational_trial(r, tol), next(rngs), var_negative, tol))
    return reports


def _exact_ratio_instance(alpha: float) -> DiscreteBoostInstance:
    """``d = p / q`` (uniform error term) on a fixed three-point support."""
    p = np.array([0.2, 0.3, 0.5])
    q = np.array([0.5, 0.3, 0.2])
    return DiscreteBoostInstance(DiscreteDistPair(p, q), p / q, alpha)


def suite_to_json(reports: list[CheckReport], elapsed: Optional[float] = None) -> str:
    doc = {
        "passed": all(r.passed for r in reports),
        "reports": [{**asdict(r), "passed": r.passed} for r in reports],
    }
    if elapsed is not None:
        doc["elapsed_seconds"] = elapsed
    return json.dumps(doc, indent=2, default=float)
