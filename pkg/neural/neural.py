from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

from src.errors import InsufficientDataError, TrainingError
from src.logger import logger
from src.manifest import Activation, MLPConfig, NetworkMode

N_CLASSES = 5
LOG_EVERY = 50


@dataclass(frozen=True, eq=False)
class EncodedExample:
    """One training pattern: numeric input vector and rating class 1..5."""
    user_id: int
    item_id: int
    input: np.ndarray
    label: int

    def __post_init__(self):
        if not 1 <= self.label <= N_CLASSES:
            raise ValueError(f'label must lie in 1..{N_CLASSES}, got {self.label}')


def activation(kind: Activation, x):
    kind = Activation(kind)
    if kind == Activation.RELU:
        return np.maximum(0.0, x)
    if kind == Activation.LOGISTIC:
        return expit(x)
    if kind == Activation.TANH:
        return np.tanh(x)
    return x


def activation_derivative(kind: Activation, z: np.ndarray) -> np.ndarray:
    """d activation / dz at the pre-activation z."""
    kind = Activation(kind)
    if kind == Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind == Activation.LOGISTIC:
        s = expit(z)
        return s * (1.0 - s)
    if kind == Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z, dtype=np.float64)


@dataclass(eq=False)
class MLPModel:
    """
    Feedforward classifier: [d_in, h, ..., h, 5].

    weights[l] has shape (fan_in, fan_out); hidden layers apply
    `activation`, the output layer is a softmax over the rating classes.
    """
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if len(self.weights) < 2 or len(self.weights) != len(self.biases):
            raise ValueError('need at least one hidden layer and one bias per weight matrix')
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f'layer {l}: weight {w.shape} and bias {b.shape} do not match')
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f'layer {l}: fan-in {w.shape[0]} != previous fan-out {self.weights[l - 1].shape[1]}')
        if self.weights[-1].shape[1] != N_CLASSES:
            raise ValueError(f'output layer must have {N_CLASSES} units')

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]


def init_mlp(d_in: int, cfg: MLPConfig, rng: np.random.Generator) -> MLPModel:
    """Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    sizes = [d_in] + [cfg.hidden_nodes] * cfg.hidden_layers + [N_CLASSES]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(weights, biases, cfg.activation)


def _as_batch(model: MLPModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch = np.atleast_2d(x)
    if batch.shape[1] != model.d_in:
        raise ValueError(f'input has {batch.shape[1]} features, model expects {model.d_in}')
    return batch


def _forward_pass(model: MLPModel, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations z_l and layer outputs a_l (a_0 = X); the last z is the logits."""
    outputs = [X]
    pre = []
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = outputs[-1] @ w + b
        pre.append(z)
        if l < len(model.weights) - 1:
            outputs.append(activation(model.activation, z))
    return pre, outputs


def logits(model: MLPModel, x) -> np.ndarray:
    X = _as_batch(model, x)
    out = _forward_pass(model, X)[0][-1]
    return out[0] if np.ndim(x) == 1 else out


def forward(model: MLPModel, x) -> np.ndarray:
    """Class probabilities for one input vector (or a batch of rows)."""
    return softmax(logits(model, x), axis=-1)


def cross_entropy(model: MLPModel, X: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the labels (classes 1..5)."""
    z = _forward_pass(model, _as_batch(model, X))[0][-1]
    log_p = log_softmax(z, axis=1)
    return float(-np.mean(log_p[np.arange(len(labels)), np.asarray(labels) - 1]))


def gradients(model: MLPModel, X: np.ndarray, labels: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backprop gradients of cross_entropy w.r.t. every weight matrix and bias."""
    X = _as_batch(model, X)
    labels = np.asarray(labels)
    pre, outputs = _forward_pass(model, X)
    delta = softmax(pre[-1], axis=1)
    delta[np.arange(len(labels)), labels - 1] -= 1.0
    delta /= len(labels)

    d_weights = [None] * len(model.weights)
    d_biases = [None] * len(model.biases)
    for l in range(len(model.weights) - 1, -1, -1):
        d_weights[l] = outputs[l].T @ delta
        d_biases[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l].T) * activation_derivative(model.activation, pre[l - 1])
    return d_weights, d_biases


def _stack(data: Sequence[EncodedExample]) -> tuple[np.ndarray, np.ndarray]:
    lengths = {len(e.input) for e in data}
    if len(lengths) != 1:
        raise ValueError(f'examples have differing input lengths: {sorted(lengths)}')
    X = np.vstack([e.input for e in data]).astype(np.float64)
    y = np.array([e.label for e in data], dtype=np.int64)
    return X, y


def train_mlp(cfg: MLPConfig, data: Sequence[EncodedExample], seed: Optional[int] = None) -> MLPModel:
    """
    Mini-batch gradient descent on softmax cross-entropy.

    Initialisation and per-epoch shuffling draw from one generator seeded
    with `seed` (default cfg.seed). The mean loss over all examples after
    every epoch is kept in `loss_trace`.
    """
    if not data:
        raise InsufficientDataError('cannot train a network without examples')
    if cfg.mode == NetworkMode.PER_USER and len({e.user_id for e in data}) > 1:
        raise ValueError('per-user mode needs examples of a single user')

    X, y = _stack(data)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    model = init_mlp(X.shape[1], cfg, rng)
    lr = cfg.learning_rate

    with np.errstate(over='ignore', invalid='ignore'):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(X))
            for start in range(0, len(X), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                d_weights, d_biases = gradients(model, X[batch], y[batch])
                for l in range(len(model.weights)):
                    model.weights[l] -= lr * d_weights[l]
                    model.biases[l] -= lr * d_biases[l]
            loss = cross_entropy(model, X, y)
            if not np.isfinite(loss):
                raise TrainingError(f'loss became non-finite at epoch {epoch}')
            model.loss_trace.append(loss)
            if epoch % LOG_EVERY == 0 or epoch == cfg.epochs:
                logger.debug('epoch %d/%d: loss %.6f', epoch, cfg.epochs, loss)
    return model


def predict_class(model: MLPModel, x) -> int:
    """Most probable rating class; lower class on ties."""
    return int(np.argmax(logits(model, x))) + 1


def mlp_mse(model: MLPModel, data: Sequence[EncodedExample]) -> float:
    """Mean squared distance between argmax class and true class."""
    if not data:
        raise InsufficientDataError('cannot score a network on no examples')
    X, y = _stack(data)
    predicted = np.argmax(logits(model, X), axis=1) + 1
    return float(np.mean((predicted - y) ** 2))
