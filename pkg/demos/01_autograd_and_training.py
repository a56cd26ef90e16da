"""Training a small MLP with the tape-based autograd.

Run: python demos/01_autograd_and_training.py
"""
import numpy as np

from residual_error.autograd import ComputationTape, Tensor, backward
from residual_error.data import SplitSpec, make_two_gaussians, split
from residual_error.nn import TrainConfig, evaluate, init_model, train

# Gradients come from a tape: operations on tracked tensors are recorded
# inside the `with` block and replayed backwards.
x = Tensor(np.array([[1.0, -2.0, 3.0]]), requires_grad=True)
with ComputationTape() as tape:
    loss = (x * x).relu().sum()
print("d/dx sum(relu(x^2)) =", backward(tape, loss)[x])

# The same machinery trains a classifier with plain minibatch SGD.
data = make_two_gaussians(500, separation=6.0, dimension=2, seed=0)
train_set, valid_set, test_set = split(data, SplitSpec((0.6, 0.2, 0.2), seed=0))
model = init_model([2, 32, 32, 2], seed=0)
model, curve = train(model, train_set, TrainConfig(learning_rate=0.1, epochs=20, batch_size=32))

print(f"train loss: epoch 1 {curve.records[0].train_loss:.4f}, epoch 20 {curve.records[-1].train_loss:.4f}")
print(f"test accuracy: {evaluate(model, test_set):.3f}")
