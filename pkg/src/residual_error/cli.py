"""Command-line entry point: ``residual-error <subcommand> --config FILE``.

Exit codes: 0 success, 1 invalid input (bad config, missing file, unknown
subcommand), 2 runtime failure (corrupt artifact, divergence, ...).
"""
import argparse
import dataclasses
import json
import sys

from .errors import ResidualErrorBaseError, ValidationError
from .experiment import ExperimentConfig, PhaseError, Pipeline, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

PHASE_COMMANDS = {
    "train-primary": "train_primary",
    "attack": "attack",
    "build-residual": "build_residual",
    "train-residual": "train_residual",
    "evaluate": "evaluate",
    "detect": "detect",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; we reserve 2 for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="residual-error", description="Residual error prediction and FGSM detection pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True
    helps = {
        "train-primary": "train the primary model and save primary.model",
        "attack": "FGSM-perturb the test split into test_adversarial.csv",
        "build-residual": "build S_res from the validation split into s_res.csv",
        "train-residual": "train every configured residual predictor",
        "evaluate": "write summary.csv (predictor, dataset_condition, accuracy)",
        "detect": "write detection_<name>.json and cluster_plot_<name>.csv",
        "run-all": "run every phase and write report.json",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="path to the experiment .cfg file")
        p.add_argument("--seed", type=int, help="override [experiment] seed")
        p.add_argument("--out", help="override [experiment] out (output directory)")
        if name in ("attack", "run-all"):
            p.add_argument("--epsilon-raw", type=float, help="FGSM budget on the 0-255 pixel scale")
            p.add_argument("--no-clip", action="store_true", help="do not clamp adversarial inputs to [0, 1]")
    return parser


def _config(args):
    config = ExperimentConfig.from_file(args.config, seed=args.seed, out=args.out)
    changes = {}
    if getattr(args, "epsilon_raw", None) is not None:
        changes.update(attack_epsilon_raw=args.epsilon_raw, attack_epsilon_sigma=None)
    if getattr(args, "no_clip", False):
        changes["attack_clip"] = False
    return dataclasses.replace(config, **changes) if changes else config


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        config = _config(args)
        if args.command == "run-all":
            report = run_experiment(config)
            print(json.dumps(report["table"], indent=1))
        else:
            pipe = Pipeline(config)
            result = pipe.run_phase(PHASE_COMMANDS[args.command])
            if args.command == "evaluate":
                for row in result:
                    print(",".join(map(str, row)))
            elif args.command == "detect":
                print(json.dumps(result, indent=1))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.cause, ValidationError) else EXIT_RUNTIME
    except (ResidualErrorBaseError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
