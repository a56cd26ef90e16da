"""End-to-end pipeline: primary model -> FGSM -> S_res -> residual predictors -> reports.

Each phase reads what earlier phases persisted in the output directory, so
the CLI subcommands and :func:`run_experiment` share one code path.

Configuration is an INI file; see ``ExperimentConfig.from_file`` and the
README for the schema. Every random component draws its seed from
``derive_seed(global_seed, component_name)``.
"""
import configparser
import csv
import dataclasses
import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, perturb_dataset
from .data import SplitSpec, load_dataset_csv, load_idx, load_mnist01, make_two_gaussians, save_dataset_csv, split
from .detection import detection_metrics, export_cluster_plot_data, pca_project
from .errors import ResidualErrorBaseError, ValidationError
from .gbt import GbtParams, warm_up
from .hybrid import HybridPredictor
from .nn import EarlyStopping, TrainConfig, evaluate, init_model, train
from .residual import (
    HybridSpec,
    NeuralSpec,
    build_residual_dataset,
    residual_accuracy,
    split_by_source,
    train_residual_predictor,
)
from .serialization import (
    load_model,
    load_predictor,
    load_residual_dataset,
    save_model,
    save_predictor,
    save_residual_dataset,
)

NORMAL = "normal"
ADVERSARIAL = "adversarial"


def derive_seed(global_seed, component):
    """63-bit sub-seed from SHA-256 of ``"<global_seed>/<component>"``."""
    digest = hashlib.sha256(f"{global_seed}/{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


class PhaseError(ResidualErrorBaseError):
    """A pipeline phase failed; wraps the underlying cause."""

    def __init__(self, phase, cause):
        super().__init__(f"phase {phase!r} failed: {cause}")
        self.phase = phase
        self.cause = cause


BENCHMARKS = ("two_gaussians", "mnist01")


def bundled_config(name):
    """Path of a benchmark config shipped with the package."""
    if name not in BENCHMARKS:
        raise ValidationError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")
    return Path(str(resources.files("residual_error") / "configs" / f"{name}.cfg"))


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class PredictorConfig:
    name: str
    kind: str
    hidden: tuple = (256, 128)
    train: TrainConfig = field(default_factory=TrainConfig)
    gbt: GbtParams = field(default_factory=GbtParams)
    # (label, PredictorConfig) candidates; empty means no search
    grid: tuple = ()

    def spec(self):
        if self.kind == "neural":
            return NeuralSpec(self.hidden, self.name)
        return HybridSpec(self.gbt, self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/experiment"
    dataset: dict = field(default_factory=lambda: {"kind": "two_gaussians"})
    split: tuple = (0.6, 0.2, 0.2)
    primary_hidden: tuple = (32, 32)
    primary_train: TrainConfig = field(default_factory=lambda: TrainConfig(0.1, 30, 32))
    attack_epsilon_raw: float | None = None
    attack_epsilon_sigma: float | None = 3.0
    attack_clip: bool = True
    residual_holdout: float = 0.2
    threshold: float = 0.5
    predictors: tuple = ()

    def __post_init__(self):
        if self.attack_epsilon_raw is None and self.attack_epsilon_sigma is None:
            raise ValidationError("attack needs epsilon_raw or epsilon_sigma")
        if not 0 < self.threshold < 1:
            raise ValidationError("threshold must lie in (0, 1)")
        if not 0 < self.residual_holdout < 1:
            raise ValidationError("residual holdout must lie in (0, 1)")
        SplitSpec(self.split)
        names = [p.name for p in self.predictors]
        if len(set(names)) != len(names):
            raise ValidationError("predictor names must be unique")

    @classmethod
    def from_file(cls, path, seed=None, out=None):
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ValidationError(f"{path}: {exc}") from exc
        try:
            return cls.from_parser(cp, seed, out)
        except (KeyError, ValueError, configparser.Error) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{path}: {exc}") from exc

    @classmethod
    def from_parser(cls, cp, seed=None, out=None):
        exp = cp["experiment"] if cp.has_section("experiment") else {}
        seed = int(exp.get("seed", 0)) if seed is None else int(seed)
        out = out or exp.get("out", "runs/experiment")
        dataset = dict(cp["dataset"]) if cp.has_section("dataset") else {"kind": "two_gaussians"}
        prim = cp["primary"] if cp.has_section("primary") else {}
        attack = cp["attack"] if cp.has_section("attack") else {}
        res = cp["residual"] if cp.has_section("residual") else {}
        eps_raw = attack.get("epsilon_raw")
        eps_sigma = attack.get("epsilon_sigma")
        if eps_raw is None and eps_sigma is None:
            eps_raw = "8"
        predictors = []
        for name in (n.strip() for n in res.get("predictors", "neural, hybrid").split(",") if n.strip()):
            section = f"predictor.{name}"
            sec = cp[section] if cp.has_section(section) else {}
            kind = sec.get("type", name)
            if kind not in ("neural", "hybrid"):
                raise ValidationError(f"[{section}] type must be neural or hybrid, got {kind!r}")
            predictors.append(_predictor_with_grid(name, kind, dict(sec)))
        return cls(
            seed=seed,
            out=out,
            dataset=dataset,
            split=_floats(cp.get("split", "fractions", fallback="0.6, 0.2, 0.2")),
            primary_hidden=_ints(prim.get("hidden", "32, 32")),
            primary_train=TrainConfig(
                learning_rate=float(prim.get("learning_rate", 0.1)),
                epochs=int(prim.get("epochs", 30)),
                batch_size=int(prim.get("batch_size", 32)),
            ),
            attack_epsilon_raw=float(eps_raw) if eps_raw is not None else None,
            attack_epsilon_sigma=float(eps_sigma) if eps_sigma is not None and eps_raw is None else None,
            attack_clip=_bool(attack.get("clip", "true")),
            residual_holdout=float(res.get("holdout", 0.2)),
            threshold=float(res.get("threshold", 0.5)),
            predictors=tuple(predictors),
        )

    def to_dict(self):
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "split": list(self.split),
            "primary_hidden": list(self.primary_hidden),
            "primary_train": _train_dict(self.primary_train),
            "attack": {"epsilon_raw": self.attack_epsilon_raw, "epsilon_sigma": self.attack_epsilon_sigma,
                       "clip": self.attack_clip},
            "residual_holdout": self.residual_holdout,
            "threshold": self.threshold,
            "predictors": [
                {"name": p.name, "kind": p.kind, "hidden": list(p.hidden), "train": _train_dict(p.train),
                 "gbt": p.gbt.to_dict(), "grid": [label for label, _ in p.grid]}
                for p in self.predictors
            ],
        }


def _predictor_from_section(name, kind, sec):
    es = EarlyStopping(enabled=_bool(sec.get("early_stopping", "true")), patience=int(sec.get("patience", 20)))
    return PredictorConfig(
        name=name,
        kind=kind,
        hidden=_ints(sec.get("hidden", "256, 128")),
        train=TrainConfig(
            learning_rate=float(sec.get("learning_rate", 0.1)),
            epochs=int(sec.get("epochs", 100)),
            batch_size=int(sec.get("batch_size", 32)),
            early_stopping=es,
        ),
        gbt=GbtParams(
            num_trees=int(sec.get("num_trees", 100)),
            max_depth=int(sec.get("max_depth", 4)),
            learning_rate=float(sec.get("learning_rate", 0.1)) if kind == "hybrid" else 0.1,
            reg_lambda=float(sec.get("reg_lambda", 1.0)),
            gamma=float(sec.get("gamma", 0.0)),
            min_child_weight=float(sec.get("min_child_weight", 1.0)),
        ),
    )


def _predictor_with_grid(name, kind, sec):
    """Keys written as ``a | b | c`` become grid axes; the first value is the default."""
    axes = {k: [v.strip() for v in value.split("|")] for k, value in sec.items() if "|" in value}
    base = _predictor_from_section(name, kind, {k: v.split("|")[0] for k, v in sec.items()})
    if not axes:
        return base
    keys = sorted(axes)
    grid = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        label = ", ".join(f"{k}={v}" for k, v in zip(keys, combo))
        grid.append((label, _predictor_from_section(name, kind, {**sec, **dict(zip(keys, combo))})))
    return dataclasses.replace(base, grid=tuple(grid))


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {text!r}")


def _train_dict(tc):
    return {"learning_rate": tc.learning_rate, "epochs": tc.epochs, "batch_size": tc.batch_size,
            "early_stopping": tc.early_stopping.enabled, "patience": tc.early_stopping.patience}


def _clean_json(obj):
    return json.loads(json.dumps(obj))


class Pipeline:
    """Phase runner bound to one config and output directory."""

    def __init__(self, config):
        self.config = config
        self.out = Path(config.out)
        self.timings = {}

    # --- helpers ---------------------------------------------------------
    def seed(self, component):
        return derive_seed(self.config.seed, component)

    def path(self, name):
        return self.out / name

    def _require(self, name, phase):
        p = self.path(name)
        if not p.exists():
            raise ValidationError(f"{p} is missing; run the {phase!r} phase first")
        return p

    def _timed(self, key, fn, *args, **kwargs):
        start = time.perf_counter()
        result = fn(*args, **kwargs)
        self.timings[key] = time.perf_counter() - start
        return result

    def _update_json(self, name, updates):
        p = self.path(name)
        data = json.loads(p.read_text()) if p.exists() else {}
        data.update(_clean_json(updates))
        p.write_text(json.dumps(data, indent=1, sort_keys=True))
        return data

    def dataset(self):
        spec = dict(self.config.dataset)
        kind = spec.get("kind", "two_gaussians")
        if kind == "two_gaussians":
            return make_two_gaussians(
                int(spec.get("n_per_class", 1000)),
                float(spec.get("separation", 6.0)),
                int(spec.get("dimension", 8)),
                seed=self.seed("dataset"),
            )
        if kind == "mnist01":
            limit = spec.get("limit")
            return load_mnist01(int(limit) if limit else None)
        if kind == "idx":
            ds = load_idx(spec["images"], spec["labels"], class_count=int(spec.get("class_count", 10)))
            if "digits" in spec:
                keep = _ints(spec["digits"])
                mask = np.isin(ds.labels, keep)
                remap = {d: i for i, d in enumerate(keep)}
                ds = type(ds)(ds.inputs[mask], [remap[v] for v in ds.labels[mask]], ds.name, len(keep))
            return ds
        raise ValidationError(f"unknown dataset kind {kind!r}")

    def splits(self):
        return split(self.dataset(), SplitSpec(tuple(self.config.split), self.seed("split")))

    def attack_config(self, dataset=None):
        c = self.config
        if c.attack_epsilon_raw is not None:
            eps = c.attack_epsilon_raw
        else:
            sigma = (dataset or self.dataset()).meta.get("sigma")
            if sigma is None:
                raise ValidationError("epsilon_sigma needs a dataset with a known sigma (two_gaussians)")
            eps = c.attack_epsilon_sigma * sigma * 255.0
        return AttackConfig(eps, clip=c.attack_clip)

    # --- phases ----------------------------------------------------------
    def train_primary(self):
        self.out.mkdir(parents=True, exist_ok=True)
        train_set, _, test_set = self.splits()
        dims = [train_set.dim, *self.config.primary_hidden, train_set.class_count]
        model = init_model(dims, seed=self.seed("primary.init"))
        tc = self.config.primary_train
        tc = TrainConfig(tc.learning_rate, tc.epochs, tc.batch_size, self.seed("primary.train"))
        model, _ = self._timed("train_primary", train, model, train_set, tc)
        save_model(self.path("primary.model"), model)
        self._update_json("phases.json", {"train_primary": {
            "train_accuracy": evaluate(model, train_set), "normal_accuracy": evaluate(model, test_set)}})
        return model

    def attack(self):
        model = load_model(self._require("primary.model", "train-primary"))
        _, _, test_set = self.splits()
        cfg = self.attack_config()
        adv = self._timed("attack", perturb_dataset, model, test_set, cfg)
        save_dataset_csv(self.path("test_adversarial.csv"), adv)
        self._update_json("phases.json", {"attack": {
            "attack": cfg.to_dict(), "adversarial_accuracy": evaluate(model, adv)}})
        return adv

    def build_residual(self):
        model = load_model(self._require("primary.model", "train-primary"))
        _, valid_set, _ = self.splits()
        s_res = self._timed("build_residual", build_residual_dataset, model, valid_set, self.attack_config())
        save_residual_dataset(self.path("s_res.csv"), s_res)
        clean, adv = s_res.mask("clean"), s_res.mask("adversarial")
        self._update_json("phases.json", {"build_residual": {
            "size": len(s_res), "clean_mean_r": float(s_res.r[clean].mean()),
            "adversarial_mean_r": float(s_res.r[adv].mean()) if adv.any() else None}})
        return s_res

    def train_residual(self):
        model = load_model(self._require("primary.model", "train-primary"))
        s_res = load_residual_dataset(self._require("s_res.csv", "build-residual"))
        fit, monitor = split_by_source(s_res, self.config.residual_holdout, self.seed("residual.holdout"))
        curves = {}
        if any(pc.kind == "hybrid" for pc in self.config.predictors):
            warm_up()
        grids = {}
        for pc in self.config.predictors:
            if pc.grid:
                pc, grids[pc.name] = self._grid_search(pc, model, fit, monitor)
            g = self._timed(f"train_residual.{pc.name}", self._fit_predictor, pc, model, fit, monitor)
            if isinstance(g, HybridPredictor):
                g.verify_frozen()
            save_predictor(self.path(f"predictor_{pc.name}.model"), g, bundle=False)
            if getattr(g, "curve", None) is not None:
                curves[pc.name] = g.curve.to_dict()
        if grids:
            self._update_json("grid_search.json", grids)
        self._update_json("curves.json", curves)
        return curves

    def _fit_predictor(self, pc, model, fit, monitor):
        tc = dataclasses.replace(pc.train, seed=self.seed(f"predictor.{pc.name}"))
        return train_residual_predictor(pc.spec(), fit, tc, primary=model, monitor=monitor)

    def _grid_search(self, pc, model, fit, monitor):
        """Pick the candidate with the best mean held-out residual accuracy (first wins ties)."""
        halves = [monitor.select_origin(o) for o in ("clean", "adversarial")]
        halves = [h for h in halves if len(h)]
        results, best = [], None
        for label, candidate in pc.grid:
            g = self._fit_predictor(candidate, model, fit, monitor)
            score = float(np.mean([np.mean((g.score(h.inputs) > self.config.threshold) == h.r) for h in halves]))
            results.append({"candidate": label, "held_out_accuracy": score})
            if best is None or score > best[0]:
                best = (score, label, candidate)
        return best[2], {"selected": best[1], "candidates": results}

    def _load_predictors(self, model):
        return {
            pc.name: load_predictor(self._require(f"predictor_{pc.name}.model", "train-residual"), extractor=model)
            for pc in self.config.predictors
        }

    def _load_test_sets(self):
        _, _, test_set = self.splits()
        adv = load_dataset_csv(self._require("test_adversarial.csv", "attack"), name=f"{test_set.name}/adv",
                               class_count=test_set.class_count)
        return test_set, adv

    def evaluate(self):
        model = load_model(self._require("primary.model", "train-primary"))
        test_set, adv = self._load_test_sets()
        rows = [("primary", NORMAL, evaluate(model, test_set)), ("primary", ADVERSARIAL, evaluate(model, adv))]
        for name, g in self._load_predictors(model).items():
            rows.append((name, NORMAL, residual_accuracy(g, model, test_set, self.config.threshold)))
            rows.append((name, ADVERSARIAL, residual_accuracy(g, model, adv, self.config.threshold)))
        with open(self.path("summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["predictor", "dataset_condition", "accuracy"])
            for name, cond, acc in rows:
                w.writerow([name, cond, repr(acc)])
        return rows

    def detect(self):
        model = load_model(self._require("primary.model", "train-primary"))
        test_set, adv = self._load_test_sets()
        reports = {}
        inputs = np.vstack([test_set.inputs, adv.inputs])
        coords, ratios = pca_project(inputs, 2)
        origins = ["clean"] * len(test_set) + ["adversarial"] * len(adv)
        for name, g in self._load_predictors(model).items():
            report = detection_metrics(g, model, test_set, adv, self.config.threshold)
            report.save(self.path(f"detection_{name}.json"))
            scores = np.array([r.score for r in report.records])
            export_cluster_plot_data(coords, scores, origins, self.path(f"cluster_plot_{name}.csv"))
            reports[name] = report.summary()
        reports["_pca_explained_variance"] = ratios.tolist()
        return reports

    def report(self, detection):
        phases = json.loads(self._require("phases.json", "train-primary").read_text())
        curves = json.loads(self.path("curves.json").read_text()) if self.path("curves.json").exists() else {}
        grid_path = self.path("grid_search.json")
        grids = json.loads(grid_path.read_text()) if grid_path.exists() else {}
        table = []
        with open(self._require("summary.csv", "evaluate"), newline="") as fh:
            for row in csv.DictReader(fh):
                table.append({**row, "accuracy": float(row["accuracy"])})
        detection = dict(detection)
        pca = detection.pop("_pca_explained_variance", None)
        timings = dict(self.timings)
        neural = [t for k, t in timings.items() if k.startswith("train_residual.") and
                  self._kind(k.split(".", 1)[1]) == "neural"]
        hybrid = [t for k, t in timings.items() if k.startswith("train_residual.") and
                  self._kind(k.split(".", 1)[1]) == "hybrid"]
        if neural and hybrid:
            timings["hybrid_over_neural_ratio"] = min(hybrid) / max(neural)
        report = {
            "config": self.config.to_dict(),
            "primary": {
                NORMAL: phases["train_primary"]["normal_accuracy"],
                ADVERSARIAL: phases["attack"]["adversarial_accuracy"],
            },
            "residual_predictors": {
                r["predictor"]: {} for r in table if r["predictor"] != "primary"
            },
            "table": table,
            "phases": phases,
            "curves": curves,
            "grid_search": grids,
            "detection": detection,
            "pca_explained_variance": pca,
            "timings": timings,
        }
        for r in table:
            if r["predictor"] != "primary":
                report["residual_predictors"][r["predictor"]][r["dataset_condition"]] = r["accuracy"]
        self.path("report.json").write_text(json.dumps(_clean_json(report), indent=1, sort_keys=True))
        return report

    def _kind(self, name):
        return next((p.kind for p in self.config.predictors if p.name == name), None)

    PHASES = ("train_primary", "attack", "build_residual", "train_residual", "evaluate", "detect")

    def run_phase(self, phase):
        try:
            return getattr(self, phase)()
        except ResidualErrorBaseError as exc:
            if isinstance(exc, (ValidationError, PhaseError)):
                raise
            raise PhaseError(phase, exc) from exc
        except (OSError, ArithmeticError) as exc:
            raise PhaseError(phase, exc) from exc


def run_experiment(config):
    """Run every phase in order and write ``report.json`` plus ``summary.csv``."""
    pipe = Pipeline(config)
    results = {}
    for phase in Pipeline.PHASES:
        results[phase] = pipe._timed(f"phase.{phase}", pipe.run_phase, phase)
    return pipe.report(results["detect"])


def numeric_report(report):
    """The report without wall-clock timings, for determinism comparisons."""
    return {k: v for k, v in report.items() if k != "timings"}
