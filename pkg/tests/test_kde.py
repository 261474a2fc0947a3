import functools
import math

import numpy as np
import pytest

from boostdens import kde
from boostdens.dist import isotropic_gaussian
from boostdens.errors import DegenerateSample, DimensionError
from boostdens.experiments import make_target
from boostdens.metrics import LOG_FLOOR, GridSpec, nll_normalized

# mean normalised NLL per kernel on the random 8-mixture, 20 runs
REFERENCE_NLL = {
    "gaussian": 1.0333,
    "epanechnikov": 0.9675,
    "tophat": 0.9983,
    "cosine": 0.7734,
    "triangular": 0.8898,
    "exponential": 0.9154,
}


@pytest.mark.parametrize("kernel", kde.KERNELS)
@pytest.mark.parametrize("d", [1, 2])
def test_single_sample_density_integrates_to_one(kernel, d):
    model = kde.fit(np.zeros((1, d)), kernel, bandwidth_rule=0.8)
    half = 0.8 * (30.0 if kernel == "exponential" else 8.0 if kernel == "gaussian" else 1.05)
    grid = GridSpec((-half,) * d, (half,) * d, 4000 if d == 1 else 600)
    assert math.exp(grid.log_integral(model.log_density(grid.points()))) == pytest.approx(1.0, abs=1e-3)


def test_normalisers_match_closed_form_profile_integrals():
    # int over R^d of the unit profile, evaluated independently
    assert math.exp(-kde.log_kernel_normalizer("cosine", 2)) == pytest.approx(4.0 - 8.0 / math.pi, rel=1e-12)
    assert math.exp(-kde.log_kernel_normalizer("cosine", 3)) == pytest.approx(1.5154442468903826, rel=1e-12)
    assert math.exp(-kde.log_kernel_normalizer("exponential", 2)) == pytest.approx(2 * math.pi, rel=1e-12)
    assert math.exp(-kde.log_kernel_normalizer("tophat", 3)) == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert math.exp(-kde.log_kernel_normalizer("epanechnikov", 1)) == pytest.approx(4.0 / 3.0, rel=1e-12)
    assert math.exp(-kde.log_kernel_normalizer("triangular", 1)) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        kde.log_kernel_normalizer("biweight", 2)


def test_bandwidth_rule():
    x = np.random.default_rng(0).normal(size=(64, 2)) * [1.0, 3.0]
    sigma = np.mean(np.std(x, axis=0, ddof=1))
    # in two dimensions both rules use n^(-1/6)
    assert kde.scott_silverman_bandwidth(x) == pytest.approx(sigma / 2.0, rel=1e-14)
    assert kde.fit(x).bandwidth == kde.scott_silverman_bandwidth(x)


def test_lone_gaussian_sample_is_a_gaussian():
    model = kde.fit(np.array([[1.0, -1.0]]), "gaussian", bandwidth_rule=0.5)
    x = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(model.log_density(x), isotropic_gaussian([1.0, -1.0], 0.5).log_density(x), rtol=1e-12)


def test_tophat_at_lone_sample():
    model = kde.fit(np.array([[0.0, 0.0]]), "tophat", bandwidth_rule=1.0)
    assert model.log_density(np.zeros(2))[0] == kde.log_kernel_normalizer("tophat", 2)
    assert model.log_density(np.zeros(2))[0] == pytest.approx(-math.log(math.pi), rel=1e-15)


def test_compact_kernel_floor():
    model = kde.fit(np.array([[0.0, 0.0], [1.0, 0.0]]), "epanechnikov", bandwidth_rule=0.5)
    assert model.log_density(np.array([[5.0, 5.0]]))[0] == LOG_FLOOR


@pytest.mark.parametrize("kernel", kde.KERNELS)
def test_symmetric_sample_gives_symmetric_density(kernel):
    s = np.random.default_rng(0).normal(size=(30, 2))
    model = kde.fit(np.vstack([s, -s]), kernel)
    x = np.random.default_rng(1).normal(size=(50, 2))
    np.testing.assert_allclose(model.log_density(x), model.log_density(-x), rtol=1e-10)


def test_errors():
    with pytest.raises(DegenerateSample):
        kde.fit(np.ones((5, 2)))
    with pytest.raises(DegenerateSample):
        kde.fit(np.zeros((1, 2)))
    with pytest.raises(DimensionError):
        kde.fit(np.random.default_rng(0).normal(size=(5, 2))).log_density(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        kde.fit(np.zeros((3, 2)), "gaussian", bandwidth_rule=0.0)


def test_gaussian_kde_is_consistent():
    p = isotropic_gaussian([0.0, 0.0])
    model = kde.fit(p.sample(1000, np.random.default_rng(0)))
    assert 0.9 <= nll_normalized(p, model, 10000, seed=1) <= 1.1


@functools.lru_cache(maxsize=None)
def _kde_nll_over_runs(n_runs=20, n_p=1000, n_nll=10000):
    out = {k: [] for k in kde.KERNELS}
    for seed in range(n_runs):
        target = make_target({"kind": "random"}, seed)
        x = target.sample(n_p, np.random.default_rng([seed, 12345]))
        for k in kde.KERNELS:
            out[k].append(nll_normalized(target, kde.fit(x, k), n_nll, seed=seed))
    return {k: float(np.mean(v)) for k, v in out.items()}


@pytest.mark.slow
@pytest.mark.parametrize("kernel", kde.KERNELS)
def test_reference_kernel_nll_on_random_mixture(kernel):
    means = _kde_nll_over_runs()
    assert abs(means[kernel] - REFERENCE_NLL[kernel]) <= 0.1, f"{kernel}: {means[kernel]:.4f}"
