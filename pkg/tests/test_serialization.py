import numpy as np
import pytest

from residual_error.attacks import AttackConfig
from residual_error.data import make_two_gaussians
from residual_error.errors import ChecksumError, FormatError, FrozenWeightsError
from residual_error.gbt import GbtParams
from residual_error.hybrid import train_hybrid
from residual_error.nn import TrainConfig, init_model, train
from residual_error.residual import (
    ConstantResidualPredictor,
    NeuralSpec,
    build_residual_dataset,
    train_residual_predictor,
)
from residual_error.serialization import (
    load_model,
    load_predictor,
    load_residual_dataset,
    read_artifact,
    save_model,
    save_predictor,
    save_residual_dataset,
    write_artifact,
)


@pytest.fixture(scope="module")
def setup():
    ds = make_two_gaussians(100, 6.0, 3, seed=0)
    model, _ = train(init_model([3, 8, 2], seed=0), ds, TrainConfig(0.1, 5, 16))
    s_res = build_residual_dataset(model, ds, AttackConfig(3 * ds.meta["sigma"] * 255))
    return model, s_res


@pytest.fixture
def probe():
    return np.random.default_rng(7).uniform(size=(100, 3))


def test_model_round_trip(tmp_path, setup, probe):
    model, _ = setup
    save_model(tmp_path / "m", model)
    back = load_model(tmp_path / "m")
    assert back.checksum() == model.checksum()
    np.testing.assert_array_equal(back.logits(probe), model.logits(probe))


def test_neural_predictor_round_trip(tmp_path, setup, probe):
    _, s_res = setup
    g = train_residual_predictor(NeuralSpec((8,)), s_res, TrainConfig(0.1, 3, 16))
    save_predictor(tmp_path / "g", g)
    np.testing.assert_array_equal(load_predictor(tmp_path / "g").score(probe), g.score(probe))


@pytest.mark.parametrize("bundle", [True, False])
def test_hybrid_round_trip(tmp_path, setup, probe, bundle):
    model, s_res = setup
    g = train_hybrid(model, s_res, GbtParams(num_trees=15))
    save_predictor(tmp_path / "h", g, bundle=bundle)
    back = load_predictor(tmp_path / "h", extractor=None if bundle else model)
    np.testing.assert_array_equal(back.score(probe), g.score(probe))


def test_hybrid_reference_needs_matching_extractor(tmp_path, setup):
    model, s_res = setup
    save_predictor(tmp_path / "h", train_hybrid(model, s_res, GbtParams(num_trees=2)), bundle=False)
    with pytest.raises(FormatError):
        load_predictor(tmp_path / "h")
    with pytest.raises(FrozenWeightsError):
        load_predictor(tmp_path / "h", extractor=init_model([3, 8, 2], seed=99))


def test_constant_round_trip(tmp_path, probe):
    save_predictor(tmp_path / "c", ConstantResidualPredictor(1.0, 3))
    np.testing.assert_array_equal(load_predictor(tmp_path / "c").score(probe), 1.0)


def test_truncated_file_fails_checksum(tmp_path, setup):
    save_model(tmp_path / "m", setup[0])
    text = (tmp_path / "m").read_text()
    (tmp_path / "m").write_text(text[: len(text) // 2])
    with pytest.raises(ChecksumError):
        load_model(tmp_path / "m")


def test_version_mismatch_names_versions(tmp_path):
    write_artifact(tmp_path / "a", "model", {})
    text = (tmp_path / "a").read_text().replace(" v1 ", " v7 ", 1)
    (tmp_path / "a").write_text(text)
    with pytest.raises(FormatError, match="version 7.*version 1"):
        read_artifact(tmp_path / "a")


def test_wrong_kind(tmp_path, setup):
    save_model(tmp_path / "m", setup[0])
    with pytest.raises(FormatError):
        load_predictor(tmp_path / "m")


def test_not_an_artifact(tmp_path):
    (tmp_path / "x").write_text("hello\n")
    with pytest.raises(FormatError):
        read_artifact(tmp_path / "x")


def test_residual_dataset_round_trip(tmp_path, setup):
    _, s_res = setup
    save_residual_dataset(tmp_path / "s.csv", s_res)
    back = load_residual_dataset(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.inputs, s_res.inputs)
    np.testing.assert_array_equal(back.r, s_res.r)
    assert list(back.origin) == list(s_res.origin)
    np.testing.assert_array_equal(back.source_index, s_res.source_index)
    assert back.provenance == s_res.provenance
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header.startswith("index,origin,r,x_0")
