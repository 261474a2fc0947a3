"""The weak learner: a small MLP scorer ``c: R^n -> R`` trained with Adam.

The network's raw output is a logit; ``sigmoid(c)`` is the probability that a
point came from the target ``P`` rather than the current model ``Q``, and
``exp(c)`` is the corresponding density-ratio estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import DegenerateClassifier, DimensionError, EmptySampleError

__all__ = [
    "ACTIVATIONS",
    "SELU_LAMBDA",
    "SELU_ALPHA",
    "MlpClassifier",
    "TrainConfig",
    "TrainRecord",
    "EdgeEstimates",
    "init_classifier",
    "train_classifier",
    "cross_entropy",
    "gradient_check",
    "estimate_edges",
    "properly_scale",
    "PS_CSUP",
]

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

# Largest confidence bound for which a weak-learning classifier is Properly Scaled.
PS_CSUP = math.log(2.0) / 2.0


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_d(z, a):
    return (z > 0).astype(z.dtype)


def _selu(z):
    return SELU_LAMBDA * np.where(z > 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def _selu_d(z, a):
    return np.where(z > 0, SELU_LAMBDA, a + SELU_LAMBDA * SELU_ALPHA)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _softplus_d(z, a):
    return expit(z)


def _sigmoid_d(z, a):
    return a * (1.0 - a)


def _tanh_d(z, a):
    return 1.0 - a * a


# name -> (activation, derivative expressed via (pre-activation, activation))
ACTIVATIONS = {
    "relu": (_relu, _relu_d),
    "selu": (_selu, _selu_d),
    "softplus": (_softplus, _softplus_d),
    "sigmoid": (expit, _sigmoid_d),
    "tanh": (np.tanh, _tanh_d),
}


def _normalize_activation(name: str) -> str:
    key = name.lower()
    if key not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")
    return key


def _layer_views(flat: np.ndarray, topology: Sequence[int]):
    views = []
    off = 0
    for n_in, n_out in zip(topology[:-1], topology[1:]):
        W = flat[off : off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        b = flat[off : off + n_out]
        off += n_out
        views.append((W, b))
    return views


def n_params(topology: Sequence[int]) -> int:
    return sum(i * o + o for i, o in zip(topology[:-1], topology[1:]))


@dataclass(frozen=True, eq=False)
class MlpClassifier:
    """Fully connected scorer with hidden activations and a linear output.

    ``topology`` lists layer widths from the input dimension to the single
    output unit, so ``(2, 5, 5, 1)`` is a 2x5 network on R^2 and ``(2, 1)``
    is an affine map.  ``params`` is one flat vector holding, per layer, the
    row-major ``(n_in, n_out)`` weight matrix followed by the bias.
    """

    topology: tuple[int, ...]
    activation: str
    params: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        topo = tuple(int(w) for w in self.topology)
        if len(topo) < 2 or topo[-1] != 1 or min(topo) < 1:
            raise ValueError(f"topology must run from input dim to 1 output, got {topo}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        params = np.asarray(self.params, dtype=float)
        if params.shape != (n_params(topo),):
            raise ValueError(f"expected {n_params(topo)} parameters, got {params.shape}")
        object.__setattr__(self, "topology", topo)
        object.__setattr__(self, "activation", _normalize_activation(self.activation))
        object.__setattr__(self, "params", params)

    @property
    def dim(self) -> int:
        return self.topology[0]

    def layers(self):
        return _layer_views(self.params, self.topology)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"classifier expects points of dim {self.dim}, got shape {x.shape}")
        return x

    def raw(self, x) -> np.ndarray:
        """Network output before ``scale`` is applied."""
        a = self._check(x)
        act = ACTIVATIONS[self.activation][0]
        layers = self.layers()
        for W, b in layers[:-1]:
            a = act(a @ W + b)
        W, b = layers[-1]
        return (a @ W + b)[:, 0]

    def __call__(self, x) -> np.ndarray:
        return self.scale * self.raw(x)

    def with_scale(self, scale: float) -> "MlpClassifier":
        return replace(self, scale=float(scale))

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology),
            "activation": self.activation,
            "scale": self.scale,
            "params": self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpClassifier":
        return cls(
            topology=tuple(d["topology"]),
            activation=d["activation"],
            params=np.asarray(d["params"], dtype=float),
            scale=float(d.get("scale", 1.0)),
        )


def init_classifier(topology: Sequence[int], activation: str, rng: np.random.Generator) -> MlpClassifier:
    """Glorot-uniform weights, zero biases."""
    topology = tuple(int(w) for w in topology)
    flat = np.zeros(n_params(topology))
    for W, _ in _layer_views(flat, topology):
        n_in, n_out = W.shape
        lim = math.sqrt(6.0 / (n_in + n_out))
        W[...] = rng.uniform(-lim, lim, size=W.shape)
    return MlpClassifier(topology, activation, flat)


def cross_entropy(c: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic cross-entropy of ``sigmoid(c)`` against 0/1 labels."""
    return float(np.mean(np.logaddexp(0.0, c) - y * c))


def _loss_and_grad(views, grad_views, act, act_d, x, y, scale=1.0):
    # forward, keeping pre-activations and activations
    zs = []
    acts = [x]
    a = x
    last = len(views) - 1
    for i, (W, b) in enumerate(views):
        z = a @ W + b
        if i < last:
            zs.append(z)
            a = act(z)
            acts.append(a)
        else:
            a = z
    c = scale * a[:, 0]
    n = x.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, c) - y * c))
    delta = ((expit(c) - y) * (scale / n))[:, None]
    for i in range(last, -1, -1):
        gW, gb = grad_views[i]
        np.matmul(acts[i].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        if i > 0:
            delta = (delta @ views[i][0].T) * act_d(zs[i - 1], acts[i])
    return loss, c


def loss_and_grad(classifier: MlpClassifier, x, y) -> tuple[float, np.ndarray]:
    """Cross-entropy of the (scaled) classifier and its gradient w.r.t. ``params``."""
    x = classifier._check(x)
    y = np.asarray(y, dtype=float)
    grad = np.zeros_like(classifier.params)
    act, act_d = ACTIVATIONS[classifier.activation]
    loss, _ = _loss_and_grad(
        classifier.layers(), _layer_views(grad, classifier.topology), act, act_d, x, y, classifier.scale
    )
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 600
    batch_size: int = 50
    eta: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_gap: Optional[float] = None
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.early_stop_gap is not None and not 0.0 < self.early_stop_gap < 1.0:
            raise ValueError("early_stop_gap must lie in (0, 1)")
        if self.eta <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("invalid Adam hyper-parameters")


@dataclass
class TrainRecord:
    """Per-epoch learning curves plus the train/test split used."""

    initial_train_loss: float
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    test_accuracy: list = field(default_factory=list)
    stopped_early: bool = False
    train_p: Optional[np.ndarray] = None
    train_q: Optional[np.ndarray] = None
    test_p: Optional[np.ndarray] = None
    test_q: Optional[np.ndarray] = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def _balanced_accuracy(c: np.ndarray, y: np.ndarray) -> float:
    pos = y == 1
    return 0.5 * (float(np.mean(c[pos] > 0)) + float(np.mean(c[~pos] <= 0)))


def _split(samples: np.ndarray, n_test: int, rng: np.random.Generator):
    perm = rng.permutation(samples.shape[0])
    return samples[perm[n_test:]], samples[perm[:n_test]]


def train_classifier(
    p_samples,
    q_samples,
    hidden: Sequence[int],
    activation: str,
    config: TrainConfig = TrainConfig(),
) -> tuple[MlpClassifier, TrainRecord]:
    """Fit ``c`` so that ``sigmoid(c)`` separates P-samples (label 1) from Q-samples (label 0).

    Each class is split into train/test parts of fraction ``config.test_fraction``.
    Training is plain minibatch Adam on the mean cross-entropy with the
    minibatch order reshuffled every epoch.  Everything random is drawn from
    one generator seeded with ``config.seed``.
    """
    p = np.asarray(p_samples, dtype=float)
    q = np.asarray(q_samples, dtype=float)
    if p.ndim != 2 or q.ndim != 2:
        raise DimensionError("samples must be 2-d arrays (n, dim)")
    if p.shape[0] < 2 or q.shape[0] < 2:
        raise EmptySampleError("need at least two samples per class")
    if p.shape[1] != q.shape[1]:
        raise DimensionError(f"P samples have dim {p.shape[1]}, Q samples dim {q.shape[1]}")
    dim = p.shape[1]
    rng = np.random.default_rng(config.seed)
    clf = init_classifier((dim, *hidden, 1), activation, rng)

    n_test_p = max(1, int(round(config.test_fraction * p.shape[0])))
    n_test_q = max(1, int(round(config.test_fraction * q.shape[0])))
    train_p, test_p = _split(p, n_test_p, rng)
    train_q, test_q = _split(q, n_test_q, rng)
    x_tr = np.vstack([train_p, train_q])
    y_tr = np.concatenate([np.ones(len(train_p)), np.zeros(len(train_q))])
    x_te = np.vstack([test_p, test_q])
    y_te = np.concatenate([np.ones(len(test_p)), np.zeros(len(test_q))])

    theta = clf.params.copy()
    grad = np.zeros_like(theta)
    views = _layer_views(theta, clf.topology)
    grad_views = _layer_views(grad, clf.topology)
    act, act_d = ACTIVATIONS[clf.activation]
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eta, eps = config.beta1, config.beta2, config.eta, config.eps

    def evaluate(x, y):
        a = x
        for W, b in views[:-1]:
            a = act(a @ W + b)
        c = (a @ views[-1][0] + views[-1][1])[:, 0]
        return cross_entropy(c, y), _balanced_accuracy(c, y)

    record = TrainRecord(
        initial_train_loss=evaluate(x_tr, y_tr)[0],
        train_p=train_p,
        train_q=train_q,
        test_p=test_p,
        test_q=test_q,
    )
    n = x_tr.shape[0]
    bs = config.batch_size
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _loss_and_grad(views, grad_views, act, act_d, x_tr[idx], y_tr[idx])
            step += 1
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            lr = eta * math.sqrt(1.0 - b2**step) / (1.0 - b1**step)
            # eps is applied to the bias-corrected second moment
            theta -= lr * m / (np.sqrt(v) + eps * math.sqrt(1.0 - b2**step))
        tr_loss, tr_acc = evaluate(x_tr, y_tr)
        te_loss, te_acc = evaluate(x_te, y_te)
        record.train_loss.append(tr_loss)
        record.test_loss.append(te_loss)
        record.train_accuracy.append(tr_acc)
        record.test_accuracy.append(te_acc)
        if config.early_stop_gap is not None and te_loss - tr_loss > config.early_stop_gap * tr_loss:
            record.stopped_early = True
            break
    return MlpClassifier(clf.topology, clf.activation, theta.copy()), record


def gradient_check(classifier: MlpClassifier, x, y, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between backprop and central-difference gradients.

    The relative error of each parameter is ``|g - g_fd| / max(|g|, |g_fd|, floor)``;
    ``floor`` keeps parameters with vanishing gradient from dividing round-off by zero.
    """
    x = classifier._check(x)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0:
        raise EmptySampleError("gradient check needs a non-empty batch")
    _, g = loss_and_grad(classifier, x, y)
    theta = classifier.params
    g_fd = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        lp = cross_entropy(replace(classifier, params=tp)(x), y)
        lm = cross_entropy(replace(classifier, params=tm)(x), y)
        g_fd[i] = (lp - lm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), floor)
    return float(np.max(np.abs(g - g_fd) / denom))


@dataclass(frozen=True)
class EdgeEstimates:
    mu_p_hat: float
    mu_q_hat: float
    c_sup_hat: float
    m_p: int
    m_q: int

    @property
    def wla_satisfied(self) -> bool:
        return self.mu_p_hat > 0 and self.mu_q_hat > 0


def estimate_edges(classifier, p_samples, q_samples) -> EdgeEstimates:
    """Empirical edges ``mean_P c / c_sup`` and ``mean_Q (-c) / c_sup``.

    ``c_sup`` is the largest ``|c|`` over both samples pooled.
    """
    p = np.asarray(p_samples, dtype=float)
    q = np.asarray(q_samples, dtype=float)
    if len(p) == 0 or len(q) == 0:
        raise EmptySampleError("edge estimation needs samples from both P and Q")
    cp = classifier(p)
    cq = classifier(q)
    c_sup = float(max(np.max(np.abs(cp)), np.max(np.abs(cq))))
    if c_sup == 0.0:
        raise DegenerateClassifier("classifier is identically zero on the samples")
    return EdgeEstimates(
        mu_p_hat=float(np.mean(cp)) / c_sup,
        mu_q_hat=float(np.mean(-cq)) / c_sup,
        c_sup_hat=c_sup,
        m_p=len(p),
        m_q=len(q),
    )


def properly_scale(classifier: MlpClassifier, edges: EdgeEstimates) -> MlpClassifier:
    """Shrink the classifier so its empirical confidence bound is at most log(2)/2.

    Edges are ratios of ``c`` to its own sup, so they are unchanged.
    """
    if not edges.c_sup_hat > 0:
        raise DegenerateClassifier("cannot scale a classifier with zero confidence bound")
    eta = min(1.0, PS_CSUP / edges.c_sup_hat)
    return classifier.with_scale(classifier.scale * eta)
