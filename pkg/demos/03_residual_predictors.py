"""Residual datasets and the two residual error predictors.

A residual label is 1 when the primary model misclassifies a sample. The
residual dataset pairs every validation sample with its FGSM copy, so the
predictors see both kinds of mistakes.

Run: python demos/03_residual_predictors.py
"""
from residual_error.attacks import AttackConfig, perturb_dataset
from residual_error.data import SplitSpec, make_two_gaussians, split
from residual_error.nn import TrainConfig, evaluate, init_model, train
from residual_error.residual import (
    HybridSpec,
    NeuralSpec,
    build_residual_dataset,
    default_neural_config,
    residual_accuracy,
    split_by_source,
    train_residual_predictor,
)

data = make_two_gaussians(1000, separation=6.0, dimension=8, seed=0)
train_set, valid_set, test_set = split(data, SplitSpec((0.5, 0.25, 0.25), seed=0))
primary, _ = train(init_model([8, 32, 32, 2], seed=0), train_set, TrainConfig(0.1, 30, 32))

# three standard deviations of the class clouds, on the pixel scale
attack = AttackConfig(3 * data.meta["sigma"] * 255)
s_res = build_residual_dataset(primary, valid_set, attack)
print(f"S_res: {len(s_res)} records, error rate clean {s_res.r[s_res.mask('clean')].mean():.3f}, "
      f"adversarial {s_res.r[s_res.mask('adversarial')].mean():.3f}")

# hold out whole source samples (clean + adversarial pairs) for early stopping
fit, monitor = split_by_source(s_res, 0.2, seed=0)
neural = train_residual_predictor(NeuralSpec((256, 128)), fit, default_neural_config(seed=0), monitor=monitor)
hybrid = train_residual_predictor(HybridSpec(), fit, primary=primary)
print(f"neural predictor stopped at epoch {len(neural.curve)}, best epoch {neural.curve.best_epoch}")

adv_test = perturb_dataset(primary, test_set, attack)
print(f"{'model':<8}{'normal':>8}{'adversarial':>13}")
print(f"{'primary':<8}{evaluate(primary, test_set):>8.3f}{evaluate(primary, adv_test):>13.3f}")
for name, g in (("neural", neural), ("hybrid", hybrid)):
    print(f"{name:<8}{residual_accuracy(g, primary, test_set):>8.3f}{residual_accuracy(g, primary, adv_test):>13.3f}")
