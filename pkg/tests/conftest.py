import numpy as np
import pytest

from residual_error.data import LabeledDataset
from residual_error.nn import init_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_model(rng, dims=None, loss_kind="cross_entropy"):
    if dims is None:
        depth = int(rng.integers(1, 4))
        dims = [int(rng.integers(2, 7)) for _ in range(depth)] + [int(rng.integers(2, 5))]
    model = init_model(dims, seed=int(rng.integers(2**31)), loss_kind=loss_kind)
    # nonzero biases so every code path is exercised
    for b in model.biases:
        b[:] = rng.normal(0.0, 0.3, b.shape)
    return model


def random_dataset(rng, n, d, classes=2):
    return LabeledDataset(rng.uniform(0, 1, (n, d)), rng.integers(0, classes, n), "rand", classes)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
