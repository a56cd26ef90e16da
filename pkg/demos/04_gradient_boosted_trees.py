"""The second-order gradient-boosted trees behind the hybrid predictor.

Run: python demos/04_gradient_boosted_trees.py
"""
import numpy as np

from residual_error.gbt import GbtParams, Leaf, fit_gbt, predict_gbt, training_loss


def show(node, indent=""):
    if isinstance(node, Leaf):
        print(f"{indent}leaf {node.score:+.4f}")
        return
    print(f"{indent}x[{node.feature}] < {node.threshold:.3f}  (gain {node.gain:.3f})")
    show(node.left, indent + "  ")
    show(node.right, indent + "  ")


rng = np.random.default_rng(0)
X = rng.uniform(size=(400, 3))
y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.7)).astype(float)

for trees in (1, 10, 100):
    ens = fit_gbt(X, y, GbtParams(num_trees=trees, max_depth=3))
    acc = np.mean((predict_gbt(ens, X) > 0.5) == y)
    print(f"{trees:>3} trees: log loss {training_loss(ens, X, y):.4f}, accuracy {acc:.3f}")

print("\nfirst tree:")
show(fit_gbt(X, y, GbtParams(num_trees=1, max_depth=2)).trees[0])
