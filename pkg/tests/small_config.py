SMALL_CFG = """
[experiment]
seed = 3

[dataset]
kind = two_gaussians
n_per_class = 150
separation = 6
dimension = 4

[split]
fractions = 0.5, 0.25, 0.25

[primary]
hidden = 16
learning_rate = 0.1
epochs = 10

[attack]
epsilon_sigma = 3

[residual]
holdout = 0.25
predictors = neural, hybrid

[predictor.neural]
type = neural
hidden = 32
epochs = 20
patience = 5

[predictor.hybrid]
type = hybrid
num_trees = 20
"""


def write_small_config(directory, extra=""):
    path = directory / "small.cfg"
    path.write_text(SMALL_CFG + extra)
    return path
