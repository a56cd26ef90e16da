"""Adversarial-example detection from residual scores, plus PCA exports.

Scores are the predicted probability that the primary model errs, so
adversarial inputs should score high. Adversarial is the positive class.
"""
import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .residual import ADVERSARIAL, CLEAN, residual_labels


def detect(g, x, threshold=0.5):
    """Flag inputs whose residual score exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    x = np.asarray(x, dtype=np.float64)
    flags = g.score(x.reshape(1, -1) if x.ndim == 1 else x) > threshold
    return bool(flags[0]) if x.ndim == 1 else flags


def rank_auc(negative_scores, positive_scores):
    """P(score_pos > score_neg) + 0.5 P(equal), via average ranks."""
    neg = np.asarray(negative_scores, dtype=np.float64)
    pos = np.asarray(positive_scores, dtype=np.float64)
    if neg.size == 0 or pos.size == 0:
        raise ValidationError("AUC needs at least one score per class")
    ranks = rankdata(np.concatenate([neg, pos]))
    u = ranks[neg.size:].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (neg.size * pos.size))


@dataclass
class DetectionRecord:
    index: int
    origin: str
    score: float
    flagged: bool
    primary_wrong: int


@dataclass
class DetectionReport:
    threshold: float
    accuracy: float
    true_positive_rate: float
    false_positive_rate: float
    auc: float
    n_clean: int
    n_adversarial: int
    records: list = field(default_factory=list)

    def summary(self):
        d = asdict(self)
        d.pop("records")
        return d

    def to_dict(self):
        d = self.summary()
        d["records"] = [asdict(r) for r in self.records]
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def detection_metrics(g, model, clean_set, adv_set, threshold=0.5):
    """Detection accuracy, TPR, FPR and rank AUC on clean vs adversarial sets."""
    if len(clean_set) == 0 or len(adv_set) == 0:
        raise ValidationError("detection needs nonempty clean and adversarial sets")
    if not 0 < threshold < 1:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    s_clean = g.score(clean_set.inputs)
    s_adv = g.score(adv_set.inputs)
    f_clean, f_adv = s_clean > threshold, s_adv > threshold
    wrong_clean = residual_labels(model, clean_set.inputs, clean_set.labels)
    wrong_adv = residual_labels(model, adv_set.inputs, adv_set.labels)
    records = [
        DetectionRecord(i, CLEAN, float(s), bool(f), int(w))
        for i, (s, f, w) in enumerate(zip(s_clean, f_clean, wrong_clean))
    ]
    offset = len(clean_set)
    records += [
        DetectionRecord(offset + i, ADVERSARIAL, float(s), bool(f), int(w))
        for i, (s, f, w) in enumerate(zip(s_adv, f_adv, wrong_adv))
    ]
    tp, fp = int(f_adv.sum()), int(f_clean.sum())
    total = len(clean_set) + len(adv_set)
    return DetectionReport(
        threshold=float(threshold),
        accuracy=(tp + len(clean_set) - fp) / total,
        true_positive_rate=tp / len(adv_set),
        false_positive_rate=fp / len(clean_set),
        auc=rank_auc(s_clean, s_adv),
        n_clean=len(clean_set),
        n_adversarial=len(adv_set),
        records=records,
    )


def pca_project(inputs, k=2):
    """Project mean-centred rows onto the top-``k`` covariance eigenvectors.

    Each eigenvector's sign is fixed so its largest-magnitude component is
    positive. Returns (coordinates n x k, explained variance ratios of length k).
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"inputs must be n x d, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ValidationError("PCA needs at least two samples")
    if not 1 <= k <= min(n, d):
        raise ValidationError(f"k must lie in [1, {min(n, d)}], got {k}")
    centred = X - X.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order[:k]]
    lead = np.argmax(np.abs(components), axis=0)
    components = components * np.sign(components[lead, np.arange(k)])
    total = eigvals.sum()
    ratios = eigvals[:k] / total if total > 0 else np.zeros(k)
    return centred @ components, ratios


def export_cluster_plot_data(coordinates, scores, origins, path):
    """Write ``pc1,pc2,score,origin`` rows for external 3-D scatter plots."""
    coordinates = np.asarray(coordinates, dtype=np.float64)
    if coordinates.size == 0:
        coordinates = coordinates.reshape(0, 2)
    if not len(coordinates) == len(scores) == len(origins):
        raise ValidationError("coordinates, scores and origins must have equal lengths")
    if coordinates.shape[1] < 2:
        raise ValidationError("need two projected coordinates per row")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pc1", "pc2", "score", "origin"])
        for (pc1, pc2), s, o in zip(coordinates[:, :2], scores, origins):
            w.writerow([repr(float(pc1)), repr(float(pc2)), repr(float(s)), o])


def read_cluster_plot_data(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    coords = np.array([[float(r["pc1"]), float(r["pc2"])] for r in rows]).reshape(-1, 2)
    scores = np.array([float(r["score"]) for r in rows])
    return coords, scores, [r["origin"] for r in rows]
