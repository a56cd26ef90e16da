"""Text persistence for models, residual predictors and residual datasets.

Model/predictor artifacts are a one-line header followed by a JSON body::

    residual-error-artifact v1 <kind> sha256=<hex digest of the body>
    {...}

Floats go through ``repr`` (via ``json``), so loading reproduces every
parameter bit for bit. A truncated or edited body fails the digest check.
"""
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError, FrozenWeightsError
from .gbt import ensemble_from_dict, ensemble_to_dict
from .hybrid import HybridPredictor
from .nn import PrimaryModel
from .residual import ConstantResidualPredictor, NeuralResidualPredictor, Provenance, ResidualDataset

MAGIC = "residual-error-artifact"
FORMAT_VERSION = 1


def write_artifact(path, kind, payload):
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(body.encode()).hexdigest()
    Path(path).write_text(f"{MAGIC} v{FORMAT_VERSION} {kind} sha256={digest}\n{body}\n")


def read_artifact(path, kind=None):
    """Return (kind, payload) after checking the header, version and digest."""
    text = Path(path).read_text()
    header, _, body = text.partition("\n")
    parts = header.split(" ")
    if len(parts) != 4 or parts[0] != MAGIC or not parts[3].startswith("sha256="):
        raise FormatError(f"{path}: not a {MAGIC} file")
    version = parts[1].lstrip("v")
    if version != str(FORMAT_VERSION):
        raise FormatError(f"{path}: format version {version}, this library reads version {FORMAT_VERSION}")
    if kind is not None and parts[2] != kind:
        raise FormatError(f"{path}: holds a {parts[2]!r}, expected {kind!r}")
    body = body.rstrip("\n")
    if hashlib.sha256(body.encode()).hexdigest() != parts[3][len("sha256="):]:
        raise ChecksumError(f"{path}: checksum mismatch (truncated or corrupted file)")
    return parts[2], json.loads(body)


def model_to_dict(model):
    return {
        "dims": list(model.dims),
        "loss_kind": model.loss_kind,
        "feature_layer_index": model.feature_layer_index,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "checksum": model.checksum(),
    }


def model_from_dict(d):
    model = PrimaryModel(
        tuple(d["dims"]),
        [np.array(w, dtype=np.float64).reshape(a, b) for w, a, b in zip(d["weights"], d["dims"][:-1], d["dims"][1:])],
        [np.array(b, dtype=np.float64) for b in d["biases"]],
        d["loss_kind"],
    )
    if model.feature_layer_index != d["feature_layer_index"]:
        raise FormatError("feature layer index does not match the architecture")
    if model.checksum() != d["checksum"]:
        raise ChecksumError("model parameters do not match the stored checksum")
    return model


def save_model(path, model):
    write_artifact(path, "model", model_to_dict(model))


def load_model(path):
    return model_from_dict(read_artifact(path, "model")[1])


def predictor_to_dict(g, bundle=True):
    """Serialise a residual predictor; hybrids embed their extractor when ``bundle``."""
    if isinstance(g, NeuralResidualPredictor):
        return {"type": "neural", "model": model_to_dict(g.model),
                "curve": g.curve.to_dict() if g.curve is not None else None}
    if isinstance(g, ConstantResidualPredictor):
        return {"type": "constant", "value": g.value, "input_dim": g.input_dim}
    if isinstance(g, HybridPredictor):
        return {
            "type": "hybrid",
            "extractor_checksum": g.extractor_checksum,
            "extractor": model_to_dict(g.extractor) if bundle else None,
            "head": ensemble_to_dict(g.head),
            "trained_on": g.trained_on,
        }
    raise FormatError(f"cannot serialise predictor of type {type(g).__name__}")


def predictor_from_dict(d, extractor=None):
    kind = d["type"]
    if kind == "neural":
        return NeuralResidualPredictor(model_from_dict(d["model"]))
    if kind == "constant":
        return ConstantResidualPredictor(float(d["value"]), int(d["input_dim"]))
    if kind == "hybrid":
        if d["extractor"] is not None:
            extractor = model_from_dict(d["extractor"])
        if extractor is None:
            raise FormatError("hybrid artifact references an extractor; pass the primary model to load it")
        if extractor.checksum() != d["extractor_checksum"]:
            raise FrozenWeightsError("supplied extractor does not match the checksum recorded at training")
        return HybridPredictor(extractor, ensemble_from_dict(d["head"]), d["extractor_checksum"], d["trained_on"])
    raise FormatError(f"unknown predictor type {kind!r}")


def save_predictor(path, g, bundle=True):
    write_artifact(path, "predictor", predictor_to_dict(g, bundle))


def load_predictor(path, extractor=None):
    return predictor_from_dict(read_artifact(path, "predictor")[1], extractor)


def save_residual_dataset(path, s_res):
    """Columnar text: ``index,origin,r,x_0..x_{d-1}``; provenance goes to a sidecar JSON."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "origin", "r"] + [f"x_{j}" for j in range(s_res.dim)])
        for i, (x, r, o) in enumerate(zip(s_res.inputs, s_res.r, s_res.origin)):
            w.writerow([i, o, repr(r.item())] + [repr(float(v)) for v in x])
    meta = {"provenance": s_res.provenance.to_dict(), "task": s_res.task,
            "source_index": s_res.source_index.tolist()}
    path.with_suffix(".meta.json").write_text(json.dumps(meta, sort_keys=True))


def load_residual_dataset(path):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["index", "origin", "r"]:
            raise FormatError(f"{path}: expected an 'index,origin,r,x_0,...' header")
        rows = list(reader)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    d = len(header) - 3
    inputs = np.array([[float(v) for v in row[3:]] for row in rows]).reshape(len(rows), d)
    r = [float(row[2]) for row in rows]
    return ResidualDataset(inputs, r, [row[1] for row in rows], meta["source_index"],
                           Provenance.from_dict(meta["provenance"]), meta["task"])
