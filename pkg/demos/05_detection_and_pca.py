"""Flagging adversarial inputs with a residual predictor, plus PCA export.

Run: python demos/05_detection_and_pca.py [output.csv]
"""
import sys

import numpy as np

from residual_error.attacks import AttackConfig, perturb_dataset
from residual_error.data import SplitSpec, make_two_gaussians, split
from residual_error.detection import detection_metrics, export_cluster_plot_data, pca_project
from residual_error.nn import TrainConfig, init_model, train
from residual_error.residual import HybridSpec, build_residual_dataset, train_residual_predictor

data = make_two_gaussians(1000, separation=6.0, dimension=8, seed=1)
train_set, valid_set, test_set = split(data, SplitSpec((0.5, 0.25, 0.25), seed=1))
primary, _ = train(init_model([8, 32, 32, 2], seed=1), train_set, TrainConfig(0.1, 30, 32))
attack = AttackConfig(3 * data.meta["sigma"] * 255)
g = train_residual_predictor(HybridSpec(), build_residual_dataset(primary, valid_set, attack), primary=primary)

adv_test = perturb_dataset(primary, test_set, attack)
report = detection_metrics(g, primary, test_set, adv_test, threshold=0.5)
print({k: round(v, 4) if isinstance(v, float) else v for k, v in report.summary().items()})

# 2-D PCA of the inputs with the residual score as a third axis
inputs = np.vstack([test_set.inputs, adv_test.inputs])
coords, ratios = pca_project(inputs, 2)
scores = np.array([r.score for r in report.records])
origins = [r.origin for r in report.records]
path = sys.argv[1] if len(sys.argv) > 1 else "cluster_plot.csv"
export_cluster_plot_data(coords, scores, origins, path)
print(f"explained variance {ratios.round(3)}; wrote {path}")
