"""Per-sample residual error prediction for classifiers, with FGSM detection."""
from .attacks import AttackConfig, fgsm, perturb_dataset
from .data import LabeledDataset, SplitSpec, load_idx, load_mnist01, make_two_gaussians, read_idx, split, write_idx
from .detection import DetectionReport, detect, detection_metrics, export_cluster_plot_data, pca_project, rank_auc
from .errors import (
    ChecksumError,
    ConsistencyError,
    DimensionError,
    FormatError,
    FrozenWeightsError,
    NumericDivergenceError,
    ResidualErrorBaseError,
    ValidationError,
)
from .experiment import ExperimentConfig, derive_seed, run_experiment
from .gbt import GbtEnsemble, GbtParams, fit_gbt, predict_gbt
from .hybrid import HybridPredictor, extract_features, predict_hybrid, train_hybrid
from .nn import EarlyStopping, PrimaryModel, TrainConfig, evaluate, init_model, predict_proba, train
from .residual import (
    HybridSpec,
    NeuralSpec,
    ResidualDataset,
    build_residual_dataset,
    residual_accuracy,
    residual_label,
    residual_labels,
    residual_score,
    train_residual_predictor,
)
from .serialization import load_model, load_predictor, save_model, save_predictor

__version__ = "0.1.0"
