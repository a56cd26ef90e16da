"""One-step FGSM against a trained classifier.

The budget is given on the 0-255 pixel scale and applied as eps/255 to
inputs normalized into [0, 1].

Run: python demos/02_fgsm.py
"""
import numpy as np

from residual_error.attacks import AttackConfig, fgsm, perturb_dataset
from residual_error.data import SplitSpec, load_mnist01, split
from residual_error.nn import TrainConfig, evaluate, init_model, train

data = load_mnist01()
train_set, _, test_set = split(data, SplitSpec((0.6, 0.2, 0.2), seed=0))
model, _ = train(init_model([784, 128, 64, 2], seed=0), train_set, TrainConfig(0.05, 10, 32))
print(f"clean test accuracy: {evaluate(model, test_set):.3f}")

for eps in (8, 32, 64):
    adv = perturb_dataset(model, test_set, AttackConfig(epsilon_raw=eps))
    change = np.abs(adv.inputs - test_set.inputs).max() * 255
    print(f"eps={eps:>2}: adversarial accuracy {evaluate(model, adv):.3f}, max pixel change {change:.1f}/255")

# A single sample works too; clipping keeps pixels inside [0, 1].
x_adv = fgsm(model, test_set.inputs[0], test_set.labels[0], AttackConfig(64))
print("single-sample range:", x_adv.min(), x_adv.max())
