"""Multilayer perceptrons trained with plain minibatch SGD.

Used for the primary model ``h`` and for neural residual predictors.
"""
import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autograd import ComputationTape, Tensor, backward, matmul, mse_loss, softmax, softmax_cross_entropy
from .errors import DimensionError, NumericDivergenceError, ValidationError

LOSS_KINDS = ("cross_entropy", "mse")


@dataclass
class PrimaryModel:
    """ReLU MLP: affine+relu hidden layers followed by an affine output layer.

    ``weights[i]`` has shape (dims[i], dims[i+1]). Activations are numbered
    from 0 (the input) to len(dims) - 1 (the output); the feature layer is the
    last hidden activation, i.e. the input to the output layer.
    """

    dims: tuple
    weights: list
    biases: list
    loss_kind: str = "cross_entropy"

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"loss_kind must be one of {LOSS_KINDS}")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} incompatible with dims {self.dims}"
                )
        if self.loss_kind == "mse" and self.dims[-1] != 1:
            raise ValidationError("regression models need a single output")

    @property
    def feature_layer_index(self):
        return len(self.dims) - 2

    @property
    def input_dim(self):
        return self.dims[0]

    @property
    def n_outputs(self):
        return self.dims[-1]

    @property
    def is_classifier(self):
        return self.loss_kind == "cross_entropy"

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def checksum(self):
        """SHA-256 over architecture, loss kind and the exact parameter bytes."""
        h = hashlib.sha256()
        h.update(repr((self.dims, self.loss_kind)).encode())
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
        return h.hexdigest()

    def copy(self):
        return copy.deepcopy(self)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"model expects inputs of width {self.input_dim}, got shape {x.shape}")
        return x

    def activations(self, x, upto=None):
        """Forward pass without a tape, returning activation number ``upto``."""
        a = self._check_input(x)
        last = len(self.weights) if upto is None else upto
        for i in range(last):
            a = a @ self.weights[i] + self.biases[i]
            if i < len(self.weights) - 1:
                a = np.maximum(a, 0.0)
        return a

    def logits(self, x):
        return self.activations(x)

    def predict(self, x):
        """Class indices (ties go to the lowest index) or regression outputs."""
        out = self.logits(x)
        if self.is_classifier:
            return np.argmax(out, axis=1)
        return out[:, 0]

    def forward(self, x, params):
        """Taped forward pass; ``params`` alternates weight, bias Tensors."""
        a = x
        n_layers = len(self.weights)
        for i in range(n_layers):
            a = matmul(a, params[2 * i]) + params[2 * i + 1]
            if i < n_layers - 1:
                a = a.relu()
        return a

    def loss(self, out, targets, reduction="mean"):
        if self.is_classifier:
            return softmax_cross_entropy(out, targets, reduction)
        return mse_loss(out, targets, reduction)


def init_model(layer_dims, seed=0, loss_kind="cross_entropy"):
    """Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))) and zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValidationError("a model needs at least input and output dims")
    if any(d <= 0 for d in dims):
        raise ValidationError(f"layer dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PrimaryModel(tuple(dims), weights, biases, loss_kind)


@dataclass(frozen=True)
class EarlyStopping:
    """Keep the best-monitored snapshot; stop after ``patience`` flat epochs.

    ``monitor`` lists held-out datasets; the monitored value is the mean of
    their accuracies (negated MSE for regression models).
    """

    enabled: bool = False
    patience: int = 5
    monitor: tuple = ()
    monitor_names: tuple = ()

    def __post_init__(self):
        if self.enabled and self.patience < 1:
            raise ValidationError("early stopping patience must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    early_stopping: EarlyStopping = field(default_factory=EarlyStopping)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    monitor_accuracy: tuple


@dataclass
class TrainingCurve:
    monitor_names: tuple = ()
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def monitored(self):
        return [float(np.mean(r.monitor_accuracy)) for r in self.records]

    def to_dict(self):
        return {
            "monitor_names": list(self.monitor_names),
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": [
                {"epoch": r.epoch, "train_loss": r.train_loss, "monitor_accuracy": list(r.monitor_accuracy)}
                for r in self.records
            ],
        }


def _monitor_value(model, dataset):
    value = evaluate(model, dataset)
    return value if model.is_classifier else -value


def train(model, train_set, config=TrainConfig()):
    """Minibatch SGD on a copy of ``model``; returns (trained model, curve).

    Monitor sets in ``config.early_stopping`` are evaluated after every epoch
    whether or not early stopping is enabled, so the curve is always filled.
    """
    if len(train_set) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if train_set.dim != model.input_dim:
        raise ValidationError(f"dataset width {train_set.dim} does not match model input {model.input_dim}")
    if model.is_classifier and train_set.class_count is not None and train_set.class_count > model.n_outputs:
        raise ValidationError(f"{train_set.class_count} classes but the model has {model.n_outputs} outputs")

    es = config.early_stopping
    if es.enabled and not es.monitor:
        raise ValidationError("early stopping needs at least one monitor split")
    model = model.copy()
    curve = TrainingCurve(monitor_names=tuple(es.monitor_names) or tuple(m.name for m in es.monitor))
    rng = np.random.default_rng(config.seed)
    n = len(train_set)
    X, Y = train_set.inputs, train_set.labels
    best_value, best_params, since_best = -np.inf, None, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            params = [Tensor(p, requires_grad=True) for p in model.parameters()]
            with ComputationTape() as tape:
                loss = model.loss(model.forward(Tensor(X[idx]), params), Y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise NumericDivergenceError(f"non-finite training loss at epoch {epoch}")
            grads = backward(tape, loss)
            for p, t in zip(model.parameters(), params):
                p -= config.learning_rate * grads[t]
            total += value * len(idx)
        record = EpochRecord(epoch, total / n, tuple(float(evaluate(model, m)) for m in es.monitor))
        curve.records.append(record)

        if es.monitor:
            value = float(np.mean([_monitor_value(model, m) for m in es.monitor]))
            if value > best_value:
                best_value, since_best = value, 0
                curve.best_epoch = epoch
                best_params = [p.copy() for p in model.parameters()]
            else:
                since_best += 1
            if es.enabled and since_best >= es.patience:
                curve.stopped_early = epoch < config.epochs
                break

    if es.enabled and best_params is not None:
        for p, best in zip(model.parameters(), best_params):
            p[...] = best
    return model, curve


def evaluate(model, dataset):
    """Accuracy for classifiers, mean squared error for regressors."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    if model.is_classifier:
        return float(np.mean(model.predict(dataset.inputs) == dataset.labels))
    return float(np.mean((model.predict(dataset.inputs) - dataset.labels) ** 2))


def predict_proba(model, x_batch):
    if not model.is_classifier:
        raise ValidationError("predict_proba needs a classification model")
    return softmax(model.logits(x_batch))
