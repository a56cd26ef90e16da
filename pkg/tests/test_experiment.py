import csv
import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from residual_error.data import load_dataset_csv, write_idx
from residual_error.errors import ValidationError
from residual_error.experiment import (
    ExperimentConfig,
    PhaseError,
    Pipeline,
    derive_seed,
    numeric_report,
    run_experiment,
)
from residual_error.hybrid import HybridPredictor
from residual_error.nn import evaluate
from residual_error.residual import residual_accuracy
from residual_error.serialization import load_model, load_predictor

from small_config import write_small_config


def test_seed_derivation_is_stable_and_component_specific():
    assert derive_seed(0, "primary.init") == derive_seed(0, "primary.init")
    assert derive_seed(0, "primary.init") != derive_seed(0, "split")
    assert derive_seed(0, "split") != derive_seed(1, "split")
    assert 0 <= derive_seed(5, "x") < 2**63


def test_config_parsing(tmp_path):
    cfg = ExperimentConfig.from_file(write_small_config(tmp_path), out=str(tmp_path / "o"))
    assert cfg.seed == 3 and cfg.primary_hidden == (16,)
    assert [p.kind for p in cfg.predictors] == ["neural", "hybrid"]
    assert cfg.predictors[1].gbt.num_trees == 20
    assert cfg.attack_epsilon_sigma == 3.0
    assert ExperimentConfig.from_file(write_small_config(tmp_path), seed=9).seed == 9


def test_missing_config_names_path(tmp_path):
    with pytest.raises(ValidationError, match="nope.cfg"):
        ExperimentConfig.from_file(tmp_path / "nope.cfg")


def test_bad_predictor_type(tmp_path):
    path = write_small_config(tmp_path, "\n[predictor.extra]\ntype = forest\n")
    text = path.read_text().replace("predictors = neural, hybrid", "predictors = neural, extra")
    path.write_text(text)
    with pytest.raises(ValidationError):
        ExperimentConfig.from_file(path)


def test_bad_split(tmp_path):
    path = write_small_config(tmp_path)
    path.write_text(path.read_text().replace("0.5, 0.25, 0.25", "0.5, 0.5, 0.5"))
    with pytest.raises(ValidationError):
        ExperimentConfig.from_file(path)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    d = tmp_path_factory.mktemp("exp")
    cfg = ExperimentConfig.from_file(write_small_config(d), out=str(d / "out"))
    return cfg, run_experiment(cfg)


def test_report_shape(run):
    cfg, report = run
    table = report["table"]
    assert len(table) == 2 * (1 + len(cfg.predictors))
    assert {(r["predictor"], r["dataset_condition"]) for r in table} == {
        (p, c) for p in ("primary", "neural", "hybrid") for c in ("normal", "adversarial")
    }
    assert all(0 <= r["accuracy"] <= 1 for r in table)
    assert all(t > 0 for t in report["timings"].values())
    assert "hybrid_over_neural_ratio" in report["timings"]
    assert report["curves"]["neural"]["epochs"]


def test_persisted_files(run):
    cfg, _ = run
    out = cfg.out
    with open(f"{out}/summary.csv") as fh:
        assert next(csv.reader(fh)) == ["predictor", "dataset_condition", "accuracy"]
    for name in ("primary.model", "s_res.csv", "s_res.meta.json", "test_adversarial.csv", "predictor_neural.model",
                 "predictor_hybrid.model", "detection_neural.json", "cluster_plot_hybrid.csv", "report.json"):
        assert Path(out, name).exists(), name
    assert json.loads(open(f"{out}/report.json").read())["table"] == run[1]["table"]


def test_report_matches_recomputation(run):
    cfg, report = run
    pipe = Pipeline(cfg)
    model = load_model(f"{cfg.out}/primary.model")
    _, _, test = pipe.splits()
    adv = load_dataset_csv(f"{cfg.out}/test_adversarial.csv", class_count=2)
    assert report["primary"]["normal"] == evaluate(model, test)
    assert report["primary"]["adversarial"] == evaluate(model, adv)
    for name in ("neural", "hybrid"):
        g = load_predictor(f"{cfg.out}/predictor_{name}.model", extractor=model)
        assert report["residual_predictors"][name]["adversarial"] == residual_accuracy(g, model, adv)
        if isinstance(g, HybridPredictor):
            assert g.extractor_checksum == model.checksum()


def test_determinism(run, tmp_path):
    cfg, report = run
    again = run_experiment(dataclasses.replace(cfg, out=str(tmp_path / "again")))
    assert numeric_report(again) == numeric_report(report)


def test_phase_error_keeps_partial_artifacts(tmp_path):
    path = write_small_config(tmp_path)
    path.write_text(path.read_text().replace("kind = two_gaussians", "kind = idx\nimages = /missing\nlabels = /m"))
    cfg = ExperimentConfig.from_file(path, out=str(tmp_path / "o"))
    with pytest.raises(PhaseError, match="train_primary"):
        run_experiment(cfg)


def test_grid_search_picks_best_candidate(tmp_path):
    path = write_small_config(tmp_path)
    text = path.read_text().replace("num_trees = 20", "num_trees = 20\nmax_depth = 1 | 3")
    path.write_text(text)
    cfg = ExperimentConfig.from_file(path, out=str(tmp_path / "o"))
    hybrid = cfg.predictors[1]
    assert hybrid.gbt.max_depth == 1
    assert [label for label, _ in hybrid.grid] == ["max_depth=1", "max_depth=3"]
    report = run_experiment(cfg)
    search = report["grid_search"]["hybrid"]
    scores = [c["held_out_accuracy"] for c in search["candidates"]]
    assert search["selected"] == search["candidates"][scores.index(max(scores))]["candidate"]


def test_idx_dataset_with_digit_selection(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.tile(np.array([0, 1, 2], dtype=np.uint8), 40)
    images = (rng.uniform(size=(120, 2, 2)) * 60 + labels[:, None, None] * 60).astype(np.uint8)
    write_idx(tmp_path / "img.gz", images)
    write_idx(tmp_path / "lab.gz", labels)
    path = write_small_config(tmp_path)
    text = path.read_text().replace(
        "kind = two_gaussians",
        f"kind = idx\nimages = {tmp_path / 'img.gz'}\nlabels = {tmp_path / 'lab.gz'}\ndigits = 0, 2",
    ).replace("epsilon_sigma = 3", "epsilon_raw = 32")
    path.write_text(text)
    cfg = ExperimentConfig.from_file(path, out=str(tmp_path / "o"))
    ds = Pipeline(cfg).dataset()
    assert len(ds) == 80 and ds.class_count == 2 and set(ds.labels.tolist()) == {0, 1}
    report = run_experiment(cfg)
    assert len(report["table"]) == 6
