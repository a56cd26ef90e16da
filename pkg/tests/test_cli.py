import json
import subprocess
import sys

import pytest

from residual_error.cli import main

from small_config import write_small_config

SUBCOMMANDS = ("train-primary", "attack", "build-residual", "train-residual", "evaluate", "detect", "run-all")


def test_help_lists_subcommands(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert all(s in out for s in SUBCOMMANDS)


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_subcommand_help_lists_flags(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    out = capsys.readouterr().out
    assert "--config" in out and "--seed" in out and "--out" in out


def test_attack_flags(capsys):
    main(["attack", "--help"])
    out = capsys.readouterr().out
    assert "--epsilon-raw" in out and "--no-clip" in out


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_config_names_path(tmp_path, capsys):
    assert main(["run-all", "--config", str(tmp_path / "absent.cfg")]) == 1
    assert "absent.cfg" in capsys.readouterr().err


def test_phase_before_prerequisite(tmp_path):
    cfg = write_small_config(tmp_path)
    assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_phases_then_truncated_artifact(tmp_path, capsys):
    cfg, out = str(write_small_config(tmp_path)), str(tmp_path / "o")
    for cmd in SUBCOMMANDS[:-1]:
        assert main([cmd, "--config", cfg, "--out", out]) == 0, cmd
    assert (tmp_path / "o" / "summary.csv").exists()
    model = tmp_path / "o" / "primary.model"
    model.write_text(model.read_text()[:200])
    capsys.readouterr()
    assert main(["attack", "--config", cfg, "--out", out]) == 2
    assert "checksum" in capsys.readouterr().err


def test_attack_overrides(tmp_path):
    cfg, out = str(write_small_config(tmp_path)), str(tmp_path / "o")
    assert main(["train-primary", "--config", cfg, "--out", out]) == 0
    assert main(["attack", "--config", cfg, "--out", out, "--epsilon-raw", "0", "--no-clip"]) == 0
    phases = json.loads((tmp_path / "o" / "phases.json").read_text())
    assert phases["attack"]["attack"] == {"epsilon_raw": 0.0, "value_range": [0.0, 1.0], "clip": False}
    assert phases["attack"]["adversarial_accuracy"] == phases["train_primary"]["normal_accuracy"]


def test_console_entry_point(tmp_path):
    cfg = write_small_config(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "residual_error.cli", "run-all", "--config", str(cfg), "--out", str(tmp_path / "o"),
         "--seed", "11"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["seed"] == 11
