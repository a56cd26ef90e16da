"""Residual labels, residual datasets and residual error predictors.

For a classifier the residual label of (x, y) is 1 when the primary model
gets x wrong and 0 otherwise; for a regressor it is the squared error. A
residual predictor ``g`` is any object with ``score(x_batch)`` returning the
estimated residual error per row (a probability of error for classifiers).
"""
import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attacks import perturb_dataset
from .data import LabeledDataset
from .errors import DimensionError, ValidationError
from .gbt import GbtParams
from .hybrid import train_hybrid
from .nn import EarlyStopping, TrainConfig, init_model, predict_proba, train

CLEAN = "clean"
ADVERSARIAL = "adversarial"


def residual_labels(model, x, y):
    """Vectorised residual labels for a batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"model expects inputs of width {model.input_dim}, got shape {x.shape}")
    y = np.atleast_1d(np.asarray(y))
    if model.is_classifier:
        return (model.predict(x) != y).astype(np.int64)
    return (model.predict(x) - y.astype(np.float64)) ** 2


def residual_label(model, x, y):
    """r(x) for a single sample: 0/1 error indicator, or squared error."""
    r = residual_labels(model, x, y)[0]
    return int(r) if model.is_classifier else float(r)


@dataclass
class ResidualSample:
    x: np.ndarray
    r: float
    origin: str


@dataclass(frozen=True)
class Provenance:
    model_checksum: str
    attack: tuple | None
    source: str

    def to_dict(self):
        return {
            "model_checksum": self.model_checksum,
            "attack": dict(self.attack) if self.attack is not None else None,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d):
        attack = d.get("attack")
        return cls(d["model_checksum"], tuple(sorted((k, _freeze(v)) for k, v in attack.items())) if attack else None,
                   d["source"])


def _freeze(v):
    return tuple(v) if isinstance(v, list) else v


@dataclass
class ResidualDataset:
    """Columnar (x, r, origin) records plus the index of each source sample."""

    inputs: np.ndarray
    r: np.ndarray
    origin: np.ndarray
    source_index: np.ndarray
    provenance: Provenance
    task: str = "classification"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64).reshape(len(self.r), -1)
        self.r = np.asarray(self.r, dtype=np.int64 if self.task == "classification" else np.float64)
        self.origin = np.asarray(self.origin, dtype=object)
        self.source_index = np.asarray(self.source_index, dtype=np.int64)
        if self.task == "classification" and not np.all((self.r == 0) | (self.r == 1)):
            raise ValidationError("classification residual labels must be 0 or 1")
        if self.task == "regression" and np.any(self.r < 0):
            raise ValidationError("regression residual labels must be nonnegative")
        if not set(self.origin.tolist()) <= {CLEAN, ADVERSARIAL}:
            raise ValidationError("origin must be 'clean' or 'adversarial'")

    def __len__(self):
        return len(self.r)

    def __iter__(self):
        for x, r, o in zip(self.inputs, self.r, self.origin):
            yield ResidualSample(x, r.item(), o)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def mask(self, origin):
        return self.origin == origin

    def subset(self, index):
        index = np.asarray(index)
        if index.size == 0:
            index = index.astype(np.int64)
        return ResidualDataset(self.inputs[index], self.r[index], self.origin[index],
                               self.source_index[index], self.provenance, self.task)

    def select_origin(self, origin):
        return self.subset(np.flatnonzero(self.mask(origin)))

    def as_labeled(self, name="s_res"):
        class_count = 2 if self.task == "classification" else None
        return LabeledDataset(self.inputs, self.r, name, class_count)


def build_residual_dataset(model, valid_set, attack=None):
    """Relabel ``valid_set`` with residual labels; optionally add FGSM copies.

    With an attack the output interleaves clean and adversarial records per
    source sample: (x0, clean), (x0', adversarial), (x1, clean), ...
    """
    if len(valid_set) == 0:
        raise ValidationError("validation set is empty")
    n = len(valid_set)
    clean_r = residual_labels(model, valid_set.inputs, valid_set.labels)
    task = "classification" if model.is_classifier else "regression"
    attack_key = tuple(sorted((k, _freeze(v)) for k, v in attack.to_dict().items())) if attack else None
    prov = Provenance(model.checksum(), attack_key, valid_set.name)
    if attack is None:
        return ResidualDataset(valid_set.inputs.copy(), clean_r, [CLEAN] * n, np.arange(n), prov, task)
    adv = perturb_dataset(model, valid_set, attack)
    adv_r = residual_labels(model, adv.inputs, adv.labels)
    inputs = np.empty((2 * n, valid_set.dim))
    inputs[0::2], inputs[1::2] = valid_set.inputs, adv.inputs
    r = np.empty(2 * n, dtype=clean_r.dtype)
    r[0::2], r[1::2] = clean_r, adv_r
    origin = [CLEAN, ADVERSARIAL] * n
    return ResidualDataset(inputs, r, origin, np.repeat(np.arange(n), 2), prov, task)


def split_by_source(s_res, fraction, seed=0):
    """Hold out ``fraction`` of the source samples (with all their records)."""
    sources = np.unique(s_res.source_index)
    n_hold = int(round(fraction * len(sources)))
    if not 0 < n_hold < len(sources):
        raise ValidationError(f"holdout fraction {fraction} leaves an empty part")
    held = np.random.default_rng(seed).permutation(sources)[:n_hold]
    is_held = np.isin(s_res.source_index, held)
    return s_res.subset(np.flatnonzero(~is_held)), s_res.subset(np.flatnonzero(is_held))


# --- predictors -----------------------------------------------------------

@dataclass(frozen=True)
class NeuralSpec:
    hidden: tuple = (256, 128)
    name: str = "neural"


@dataclass(frozen=True)
class HybridSpec:
    params: GbtParams = field(default_factory=GbtParams)
    name: str = "hybrid"


@dataclass
class ConstantResidualPredictor:
    value: float
    input_dim: int

    def score(self, x_batch):
        x = np.asarray(x_batch, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] != self.input_dim:
            raise DimensionError(f"predictor expects inputs of width {self.input_dim}, got shape {x.shape}")
        return np.full(x.shape[0], float(self.value))


@dataclass
class NeuralResidualPredictor:
    """An MLP over raw inputs: 2-way softmax for 0/1 labels, 1 output for MSE."""

    model: object
    curve: object = None

    @property
    def input_dim(self):
        return self.model.input_dim

    def score(self, x_batch):
        if self.model.is_classifier:
            return predict_proba(self.model, x_batch)[:, 1]
        return np.maximum(self.model.logits(x_batch)[:, 0], 0.0)


def _monitor_sets(monitor):
    sets, names = [], []
    for origin in (CLEAN, ADVERSARIAL):
        part = monitor.select_origin(origin)
        if len(part):
            sets.append(part.as_labeled(f"monitor/{origin}"))
            names.append(origin)
    return tuple(sets), tuple(names)


def train_residual_predictor(spec, s_res, config=TrainConfig(), primary=None, monitor=None):
    """Fit g* = argmin_g sum l'(g(x), r(x)) over ``s_res``.

    ``monitor`` is a held-out ResidualDataset; its clean and adversarial halves
    are tracked every epoch and drive early stopping when enabled in ``config``.
    The hybrid spec needs the ``primary`` model as its feature extractor.
    """
    if len(s_res) == 0:
        raise ValidationError("cannot train on an empty residual dataset")
    if s_res.task == "classification" and len(np.unique(s_res.r)) == 1:
        value = float(s_res.r[0])
        warnings.warn(f"all residual labels are {int(value)}; fitting a constant predictor", stacklevel=2)
        return ConstantResidualPredictor(value, s_res.dim)
    if isinstance(spec, HybridSpec):
        if primary is None:
            raise ValidationError("the hybrid predictor needs the primary model")
        return train_hybrid(primary, s_res, spec.params)
    if not isinstance(spec, NeuralSpec):
        raise ValidationError(f"unknown predictor spec {spec!r}")
    if monitor is not None:
        sets, names = _monitor_sets(monitor)
        es = dataclasses.replace(config.early_stopping, monitor=sets, monitor_names=names)
        config = dataclasses.replace(config, early_stopping=es)
    classification = s_res.task == "classification"
    dims = [s_res.dim, *spec.hidden, 2 if classification else 1]
    net = init_model(dims, seed=config.seed, loss_kind="cross_entropy" if classification else "mse")
    net, curve = train(net, s_res.as_labeled(), config)
    return NeuralResidualPredictor(net, curve)


def residual_score(g, x):
    """Estimated residual error R_h(x) for one sample or a batch."""
    x = np.asarray(x, dtype=np.float64)
    scores = g.score(x.reshape(1, -1) if x.ndim == 1 else x)
    return float(scores[0]) if x.ndim == 1 else scores


def residual_accuracy(g, model, dataset, threshold=0.5):
    """Agreement between thresholded scores and the true residual labels."""
    if len(dataset) == 0:
        raise ValidationError("cannot score an empty dataset")
    if not model.is_classifier:
        raise ValidationError("residual accuracy is defined for classification residuals")
    r = residual_labels(model, dataset.inputs, dataset.labels)
    predicted = (g.score(dataset.inputs) > threshold).astype(np.int64)
    return float(np.mean(predicted == r))


def default_neural_config(seed=0, monitor_patience=20):
    """SGD settings used by the bundled benchmarks (early stopping needs a monitor)."""
    es = EarlyStopping(enabled=monitor_patience is not None, patience=monitor_patience or 20)
    return TrainConfig(learning_rate=0.1, epochs=100, batch_size=32, seed=seed, early_stopping=es)
