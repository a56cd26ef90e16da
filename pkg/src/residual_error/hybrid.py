"""Hybrid residual predictor: frozen primary-model features into a GBT head."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FrozenWeightsError, ValidationError
from .gbt import GbtEnsemble, GbtParams, fit_gbt, predict_gbt


def extract_features(model, x_batch):
    """Post-ReLU activations of the last hidden layer (the classifier's input)."""
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"model expects inputs of width {model.input_dim}, got shape {x.shape}")
    return model.activations(x, upto=model.feature_layer_index)


@dataclass
class HybridPredictor:
    """Shares ``extractor`` by reference; ``extractor_checksum`` guards it."""

    extractor: object
    head: GbtEnsemble
    extractor_checksum: str
    trained_on: dict = field(default_factory=dict)

    def __post_init__(self):
        feat_dim = self.extractor.dims[self.extractor.feature_layer_index]
        if self.head.n_features is not None and self.head.n_features != feat_dim:
            raise DimensionError(f"head expects {self.head.n_features} features, extractor gives {feat_dim}")

    @property
    def input_dim(self):
        return self.extractor.input_dim

    def verify_frozen(self):
        current = self.extractor.checksum()
        if current != self.extractor_checksum:
            raise FrozenWeightsError(
                f"extractor parameters changed (checksum {current[:12]} != {self.extractor_checksum[:12]})"
            )

    def score(self, x_batch):
        self.verify_frozen()
        return predict_gbt(self.head, extract_features(self.extractor, x_batch))


def train_hybrid(model, s_res, params=GbtParams()):
    """Fit a logistic GBT head on the extractor's features of ``s_res``."""
    if len(s_res) == 0:
        raise ValidationError("cannot train on an empty residual dataset")
    if s_res.task != "classification":
        raise ValidationError("the hybrid predictor needs 0/1 residual labels")
    checksum = model.checksum()
    features = extract_features(model, s_res.inputs)
    head = fit_gbt(features, s_res.r, params, objective="logistic")
    if model.checksum() != checksum:
        raise FrozenWeightsError("extractor parameters changed during training")
    return HybridPredictor(model, head, checksum, trained_on=s_res.provenance.to_dict())


def predict_hybrid(predictor, x_batch):
    return predictor.score(x_batch)
