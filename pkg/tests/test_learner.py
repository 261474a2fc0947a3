import math

import numpy as np
import pytest

from boostdens.errors import DegenerateClassifier, DimensionError, EmptySampleError
from boostdens.learner import (
    ACTIVATIONS,
    PS_CSUP,
    MlpClassifier,
    TrainConfig,
    cross_entropy,
    estimate_edges,
    gradient_check,
    init_classifier,
    loss_and_grad,
    properly_scale,
    train_classifier,
)


def _batch(seed=0, n=40, dim=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    y = (rng.uniform(size=n) < 0.5).astype(float)
    return x, y


@pytest.mark.parametrize("activation", sorted(ACTIVATIONS))
@pytest.mark.parametrize("topology", [(2, 1), (2, 5, 1), (2, 5, 5, 1), (3, 4, 3, 2, 1)])
def test_backprop_matches_finite_differences(activation, topology):
    rng = np.random.default_rng(7)
    clf = init_classifier(topology, activation, rng)
    clf = MlpClassifier(clf.topology, activation, clf.params + rng.normal(0, 0.1, clf.params.size))
    x, y = _batch(1, dim=topology[0])
    if activation == "relu":
        # keep pre-activations away from the kink
        assert gradient_check(clf, x, y, h=1e-6) < 1e-4
    else:
        assert gradient_check(clf, x, y) < 1e-5


def test_gradient_respects_scale():
    clf = init_classifier((2, 5, 1), "tanh", np.random.default_rng(0)).with_scale(0.3)
    x, y = _batch(2)
    assert gradient_check(clf, x, y) < 1e-5


def test_gradient_check_empty_batch():
    clf = init_classifier((2, 1), "relu", np.random.default_rng(0))
    with pytest.raises(EmptySampleError):
        gradient_check(clf, np.zeros((0, 2)), np.zeros(0))


def test_cross_entropy_at_zero_is_log2():
    assert cross_entropy(np.zeros(4), np.array([0, 1, 0, 1.0])) == pytest.approx(math.log(2.0), rel=1e-15)
    loss, _ = loss_and_grad(MlpClassifier((2, 1), "relu", np.zeros(3)), *_batch())
    assert loss == pytest.approx(math.log(2.0), rel=1e-15)


def test_affine_forward_pass():
    clf = MlpClassifier((2, 1), "selu", np.array([2.0, -1.0, 0.5]))
    np.testing.assert_allclose(clf(np.array([[1.0, 1.0], [0.0, 2.0]])), [1.5, -1.5])
    np.testing.assert_allclose(clf.with_scale(2.0)([[1.0, 1.0]]), [3.0])
    with pytest.raises(DimensionError):
        clf(np.zeros((2, 3)))


def test_classifier_dict_roundtrip():
    clf = init_classifier((3, 4, 1), "softplus", np.random.default_rng(0)).with_scale(0.25)
    back = MlpClassifier.from_dict(clf.to_dict())
    x = np.random.default_rng(1).normal(size=(5, 3))
    np.testing.assert_array_equal(back(x), clf(x))


def test_training_is_deterministic():
    rng = np.random.default_rng(0)
    p = rng.normal(1.0, 1.0, size=(200, 2))
    q = rng.normal(-1.0, 1.0, size=(200, 2))
    cfg = TrainConfig(epochs=20, seed=5)
    a, ra = train_classifier(p, q, (5,), "relu", cfg)
    b, rb = train_classifier(p, q, (5,), "relu", cfg)
    np.testing.assert_array_equal(a.params, b.params)
    assert ra.test_loss == rb.test_loss
    assert ra.epochs_run == 20 and len(ra.train_p) == 150 and len(ra.test_q) == 50


def test_separable_classes_are_learned():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(300, 2)) + [4.0, 0.0]
    q = rng.normal(size=(300, 2)) - [4.0, 0.0]
    clf, rec = train_classifier(p, q, (5, 5), "selu", TrainConfig(epochs=100, eta=0.01, seed=0))
    assert rec.test_accuracy[-1] > 0.98
    assert rec.train_loss[-1] < rec.initial_train_loss
    edges = estimate_edges(clf, rec.test_p, rec.test_q)
    assert edges.wla_satisfied


def test_early_stopping_triggers_on_overfit():
    rng = np.random.default_rng(2)
    p = rng.normal(size=(20, 2))
    q = rng.normal(size=(20, 2))
    _, rec = train_classifier(p, q, (20, 20), "relu", TrainConfig(epochs=500, eta=0.01, early_stop_gap=0.2, batch_size=5))
    assert rec.stopped_early and rec.epochs_run < 500


def test_training_input_validation():
    with pytest.raises(DimensionError):
        train_classifier(np.zeros((5, 2)), np.zeros((5, 3)), (2,), "relu")
    with pytest.raises(EmptySampleError):
        train_classifier(np.zeros((1, 2)), np.zeros((5, 2)), (2,), "relu")
    with pytest.raises(ValueError):
        TrainConfig(test_fraction=1.0)


def test_edge_estimates_oracle():
    clf = MlpClassifier((1, 1), "relu", np.array([1.0, 0.0]))
    e = estimate_edges(clf, np.array([[1.0], [2.0]]), np.array([[-1.0], [-4.0], [1.0]]))
    assert e.c_sup_hat == 4.0
    assert e.mu_p_hat == pytest.approx(1.5 / 4.0)
    assert e.mu_q_hat == pytest.approx((4.0 / 3.0) / 4.0)
    with pytest.raises(EmptySampleError):
        estimate_edges(clf, np.zeros((0, 1)), np.ones((2, 1)))
    with pytest.raises(DegenerateClassifier):
        estimate_edges(clf, np.zeros((2, 1)), np.zeros((2, 1)))


def test_proper_scaling_keeps_edges():
    clf = MlpClassifier((1, 1), "relu", np.array([1.0, 0.0]))
    p, q = np.array([[1.0], [2.0]]), np.array([[-1.0], [-4.0], [1.0]])
    e = estimate_edges(clf, p, q)
    scaled = properly_scale(clf, e)
    e2 = estimate_edges(scaled, p, q)
    assert PS_CSUP == pytest.approx(0.34657359027997264, rel=1e-15)
    assert e2.c_sup_hat == pytest.approx(PS_CSUP, rel=1e-14)
    assert e2.mu_p_hat == pytest.approx(e.mu_p_hat, rel=1e-14)
    assert e2.mu_q_hat == pytest.approx(e.mu_q_hat, rel=1e-14)
    small = clf.with_scale(0.01)
    assert properly_scale(small, estimate_edges(small, p, q)).scale == 0.01
