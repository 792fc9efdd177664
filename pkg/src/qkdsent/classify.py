"""Feed-forward softmax classifier over the selected features."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError

SCHEMA_VERSION = 1
HIDDEN = (128, 256, 128)
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True
    standardize: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class MlpModel:
    """Dense network: rectifier on hidden layers, softmax on the output.

    Inputs are shifted and scaled by ``input_mean``/``input_scale`` first;
    MISSING entries (``None`` or NaN) are then replaced by ``imputation_value``.
    """

    layer_sizes: tuple
    weights: list
    biases: list
    imputation_value: float = 0.0
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    loss_trace: list = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def preprocess(self, X) -> np.ndarray:
        X = np.array(X, dtype=float, ndmin=2)
        if X.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        if self.input_mean is not None:
            X = (X - self.input_mean) / self.input_scale
        X[np.isnan(X)] = self.imputation_value
        return X

    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "imputation_value": self.imputation_value,
            "input_mean": None if self.input_mean is None else self.input_mean.tolist(),
            "input_scale": None if self.input_scale is None else self.input_scale.tolist(),
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        sizes = tuple(int(s) for s in d["layer_sizes"])
        weights = [np.array(w, dtype=float).reshape(sizes[i], sizes[i + 1])
                   for i, w in enumerate(d["weights"])]
        biases = [np.array(b, dtype=float) for b in d["biases"]]
        mean = d.get("input_mean")
        scale = d.get("input_scale")
        return cls(layer_sizes=sizes, weights=weights, biases=biases,
                   imputation_value=float(d["imputation_value"]),
                   input_mean=None if mean is None else np.array(mean, dtype=float),
                   input_scale=None if scale is None else np.array(scale, dtype=float),
                   loss_trace=[float(v) for v in d.get("loss_trace", [])])


def init_model(n_inputs: int, n_classes: int, seed: int = 0,
               hidden=HIDDEN) -> MlpModel:
    """Uniform init in +-sqrt(6/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = (n_inputs, *hidden, n_classes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(model: MlpModel, X: np.ndarray):
    acts = [X]
    pre = []
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        pre.append(z)
        a = _softmax(z) if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return pre, acts


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Class probabilities for one input vector (or a batch of rows)."""
    x = np.asarray([np.nan if v is None else v for v in inputs], dtype=float) \
        if isinstance(inputs, (list, tuple)) else np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    X = model.preprocess(x)
    _, acts = _forward_cache(model, X)
    return acts[-1][0] if single else acts[-1]


def loss(probabilities, label: int) -> float:
    """Cross-entropy -ln p[label] with p floored at 1e-12."""
    return -math.log(max(float(probabilities[label]), PROB_FLOOR))


def _backward(model: MlpModel, X, y):
    """Mean cross-entropy over the batch and its parameter gradients."""
    pre, acts = _forward_cache(model, X)
    P = acts[-1]
    n = len(X)
    p_true = np.maximum(P[np.arange(n), y], PROB_FLOOR)
    batch_loss = float(-np.log(p_true).mean())
    delta = P.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w, grads_b = [], []
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w.append(acts[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return batch_loss, grads_w[::-1], grads_b[::-1]


def train(X, y, config: TrainConfig | None = None, n_classes: int | None = None,
          hidden=HIDDEN) -> MlpModel:
    """Mini-batch gradient descent with momentum on mean cross-entropy.

    ``X`` may contain NaN for MISSING. When ``config.standardize`` is set the
    per-column mean and standard deviation of the training rows are stored on
    the model and applied before imputation. The per-epoch mean training loss
    is recorded in ``model.loss_trace``.
    """
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise TrainingError("X must be 2-D with one label per row")
    C = int(n_classes if n_classes is not None else y.max() + 1)
    if len(y) and (y.min() < 0 or y.max() >= C):
        raise TrainingError(f"labels must lie in 0..{C - 1}")
    if len(X) < config.batch_size:
        raise TrainingError(f"{len(X)} rows is fewer than batch_size {config.batch_size}")
    model = init_model(X.shape[1], C, config.seed, hidden)
    if config.standardize:
        with warnings.catch_warnings():
            # all-missing columns
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(X, axis=0)
            std = np.nanstd(X, axis=0)
        mean = np.where(np.isfinite(mean), mean, 0.0)
        std = np.where(np.isfinite(std) & (std > 0), std, 1.0)
        model.input_mean, model.input_scale = mean, std
    Xp = model.preprocess(X)
    rng = np.random.default_rng(config.seed + 1)
    velocity = [np.zeros_like(p) for p in model.params()]
    n = len(Xp)
    for _ in range(config.epochs):
        idx = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            b = idx[start:start + config.batch_size]
            batch_loss, gw, gb = _backward(model, Xp[b], y[b])
            total += batch_loss * len(b)
            grads = [p for pair in zip(gw, gb) for p in pair]
            for v, p, gr in zip(velocity, model.params(), grads):
                v *= config.momentum
                v -= config.learning_rate * gr
                p += v
        model.loss_trace.append(total / n)
    return model


def parameter_gradients(model: MlpModel, inputs, label: int):
    """Analytic gradients of the single-example loss, ordered like ``model.params()``."""
    X = model.preprocess(np.asarray(inputs, dtype=float))
    _, gw, gb = _backward(model, X, np.array([label]))
    return [p for pair in zip(gw, gb) for p in pair]


def gradient_check(model: MlpModel, inputs, label: int, epsilon: float = 1e-5,
                   n_params: int = 200, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Compares on a random subset of at least 100 parameters. Callers should
    keep rectifier pre-activations away from zero, where the loss has a kink.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    analytic = parameter_gradients(model, inputs, label)
    params = model.params()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(max(n_params, 100), total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[k].reshape(-1)
        j = int(flat - offsets[k])
        orig = p[j]
        p[j] = orig + epsilon
        up = loss(forward(model, inputs), label)
        p[j] = orig - epsilon
        down = loss(forward(model, inputs), label)
        p[j] = orig
        numeric = (up - down) / (2.0 * epsilon)
        a = float(analytic[k].reshape(-1)[j])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
