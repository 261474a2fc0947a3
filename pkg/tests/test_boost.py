import io
import math

import numpy as np
import pytest

from boostdens.boost import (
    CLAMPED,
    REGULAR,
    TRACE_COLUMNS,
    _linesearch_alpha,
    MetricsConfig,
    StepPolicy,
    evaluation_grid,
    ewla_sample_sizes,
    geom_boost_factor,
    mu_c_sup,
    predicted_decrease,
    rate_wla_iterations,
    run_adabode,
    step_size_wla,
)
from boostdens.dist import BoostedDensity, isotropic_gaussian, mixture_ring
from boostdens.errors import RangeError
from boostdens.fdiv import DiscreteDistPair
from boostdens.learner import EdgeEstimates, MlpClassifier, TrainConfig
from boostdens.mcmc import MhConfig
from boostdens.metrics import GridSpec
from boostdens.theory import DiscreteBoostInstance, check_kl_bound

LOG2_HALF = math.log(2.0) / 2.0

FAST_LEARNER = TrainConfig(epochs=15, eta=0.01)
FAST_SAMPLER = MhConfig(n_samples=400, burn_in=200, n_chains=8, thin=2)
FAST_METRICS = MetricsConfig(n_p=400, n_q=400, n_nll=2000, points_per_axis=100)


def edges(mu_p, mu_q, c_sup):
    return EdgeEstimates(mu_p, mu_q, c_sup, 100, 100)


def test_step_size_examples():
    assert step_size_wla(0.0, 1.0) == (0.0, REGULAR)
    alpha, regime = step_size_wla(0.5, 1.0)
    assert alpha == pytest.approx(0.5493061443340549, rel=1e-14) and regime == REGULAR
    assert step_size_wla(0.9, 1.0) == (1.0, CLAMPED)
    assert step_size_wla(-0.3, 1.0) == (0.0, REGULAR)
    assert step_size_wla(1.0, 20.0)[1] == REGULAR
    with pytest.raises(RangeError):
        step_size_wla(0.5, 0.0)


def test_regime_boundary_is_tanh():
    assert mu_c_sup(1.0) == pytest.approx(0.7615941559557649, rel=1e-15)
    with pytest.raises(RangeError):
        mu_c_sup(-1.0)
    for c_sup in np.linspace(0.05, 3.0, 40):
        star = math.tanh(c_sup)
        for mu in np.linspace(-0.99, 0.99, 81):
            _, regime = step_size_wla(mu, c_sup)
            if mu >= star + 1e-12:
                assert regime == CLAMPED
            elif mu < star - 1e-12:
                assert regime == REGULAR


def test_ewla_sample_sizes():
    # kappa* = (1/3)(2/3)/2 = 1/9, so m = 8100 log 800 = 54145.35...
    assert ewla_sample_sizes(0.1, 0.1, LOG2_HALF, 10, 0.05) == (54146, 54146)
    m1, _ = ewla_sample_sizes(0.1, 0.1, 0.5, 5, 0.1)
    m2, _ = ewla_sample_sizes(0.2, 0.2, 0.5, 5, 0.1)
    assert m1 / 4 - 1 <= m2 <= m1 / 4 + 1
    for bad in [(0.0, 0.1, 1.0, 10, 0.05), (0.1, 1.5, 1.0, 10, 0.05), (0.1, 0.1, 1.0, 10, 2.0), (0.1, 0.1, 1.0, 0, 0.05)]:
        with pytest.raises(RangeError):
            ewla_sample_sizes(*bad)


def test_predicted_decrease_examples():
    assert predicted_decrease(edges(0.0, 0.4, 1.0), REGULAR) == 0.0
    assert predicted_decrease(edges(0.2, 0.5, 1.0), REGULAR, form="exact") == pytest.approx(0.054930614433405484, rel=1e-12)
    assert predicted_decrease(edges(0.2, 0.5, 1.0), REGULAR) == pytest.approx(0.054930614433405484 / 4, rel=1e-12)
    # 0.3 log(2)/2 / 2 + (1/9) / 4
    got = predicted_decrease(edges(0.3, 1.0 / 3.0, LOG2_HALF), CLAMPED, delta_hat=0.0)
    assert got == pytest.approx(0.07976381631977368, rel=1e-12)
    with pytest.raises(ValueError):
        predicted_decrease(edges(0.3, 0.3, 1.0), "other")


def test_rate_and_geometric_helpers():
    # 2 (2 - 0.1) / 0.01
    assert rate_wla_iterations(2.0, 0.1, 0.1, 0.1) == pytest.approx(380.0, rel=1e-14)
    # 1 - min(2, 0.5) 0.1 / 4
    assert geom_boost_factor(0.1, 0.1, 0.2, 1.0) == pytest.approx(0.9875, rel=1e-14)
    assert geom_boost_factor(0.1, 1.0, 0.2, 0.0) == pytest.approx(0.9, rel=1e-14)


def test_policy_validation():
    assert StepPolicy.fixed(0.25).label() != StepPolicy.wla().label()
    with pytest.raises(ValueError):
        StepPolicy.fixed(1.5)
    with pytest.raises(ValueError):
        StepPolicy("newton")


def _ring_run(policy, T=2, seed=0, **kw):
    ring = mixture_ring()
    return run_adabode(
        ring, isotropic_gaussian([0.0, 0.0]), T, policy, (5,), "relu",
        FAST_LEARNER, FAST_SAMPLER, kw.pop("metrics", FAST_METRICS), seed=seed,
    )


def test_zero_step_keeps_q0():
    bd, trace = _ring_run(StepPolicy.fixed(0.0), T=2)
    x = np.random.default_rng(0).normal(size=(30, 2))
    np.testing.assert_array_equal(bd.log_density(x), bd.q0.log_density(x))
    kl = trace.column("kl")
    assert kl[0] == kl[1] == kl[2]


def test_trace_is_deterministic_and_well_formed():
    _, a = _ring_run(StepPolicy.fixed(0.5), T=2, seed=3)
    _, b = _ring_run(StepPolicy.fixed(0.5), T=2, seed=3)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    a.write_csv(buf_a)
    b.write_csv(buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()
    lines = buf_a.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 4
    assert a.records[1].alpha == 0.5 and a.records[0].t == 0


def test_wla_policy_scales_and_steps():
    _, trace = _ring_run(StepPolicy.wla(), T=1)
    r = trace.records[1]
    assert r.edges.c_sup_hat <= LOG2_HALF + 1e-12
    expect, regime = step_size_wla(r.edges.mu_q_hat, r.edges.c_sup_hat)
    assert r.alpha == expect and r.regime == regime


def test_linesearch_picks_best_grid_alpha():
    bd, trace = _ring_run(StepPolicy.linesearch(), T=1)
    alpha = trace.records[1].alpha
    assert alpha in set(np.linspace(0.0, 1.0, 10).tolist())


def test_linesearch_argmax_and_ties():
    # q0 = N(0, 1) tilted by c(x) = x is N(alpha, 1): the best grid alpha is nearest the sample mean
    q0 = isotropic_gaussian([0.0])
    bd = BoostedDensity(q0)
    grid = GridSpec((-12.0,), (12.0,), 2000)
    train_p = np.array([[0.1], [0.7]])
    clf = MlpClassifier((1, 1), "relu", np.array([1.0, 0.0]))
    assert _linesearch_alpha(bd, clf, train_p, "grid", grid, 0, 0) == pytest.approx(4.0 / 9.0, rel=1e-15)
    flat = MlpClassifier((1, 1), "relu", np.array([0.0, 0.0]))
    assert _linesearch_alpha(bd, flat, train_p, "grid", grid, 0, 0) == 0.0


def test_kl_drop_respects_error_term_bound():
    ring = mixture_ring()
    q0 = isotropic_gaussian([0.0, 0.0])
    grid = evaluation_grid(ring, q0, 100)
    bd, trace = run_adabode(
        ring, q0, 3, StepPolicy.fixed(0.5), (5,), "relu", FAST_LEARNER, FAST_SAMPLER,
        MetricsConfig(n_p=400, n_q=400, n_nll=1000, grid=grid), seed=1,
    )
    x = grid.points()
    p = np.exp(ring.log_density(x))
    p /= p.sum()
    for t, rnd in enumerate(bd.rounds, start=1):
        prev = bd.q0.log_density(x) + sum(r.alpha * r.classifier(x) for r in bd.rounds[: t - 1])
        q = np.exp(prev - prev.max())
        q /= q.sum()
        inst = DiscreteBoostInstance(DiscreteDistPair(p, q), np.exp(rnd.classifier(x)), rnd.alpha)
        assert inst.kl_prev() == pytest.approx(trace.records[t - 1].kl, abs=1e-3)
        assert inst.kl_next() == pytest.approx(trace.records[t].kl, abs=1e-3)
        assert check_kl_bound(inst).holds
