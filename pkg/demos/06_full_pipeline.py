"""The whole experiment from a config file, as the CLI's run-all does.

Equivalent shell command:
    residual-error run-all --config src/residual_error/configs/two_gaussians.cfg --out runs/demo

Run: python demos/06_full_pipeline.py [two_gaussians|mnist01] [out_dir]
"""
import sys

from residual_error.experiment import ExperimentConfig, bundled_config, run_experiment

bench = sys.argv[1] if len(sys.argv) > 1 else "two_gaussians"
out = sys.argv[2] if len(sys.argv) > 2 else f"runs/{bench}"
report = run_experiment(ExperimentConfig.from_file(bundled_config(bench), out=out))

print(f"{'predictor':<10}{'condition':<13}accuracy")
for row in report["table"]:
    print(f"{row['predictor']:<10}{row['dataset_condition']:<13}{row['accuracy']:.4f}")
for name, det in report["detection"].items():
    print(f"detection ({name}): accuracy {det['accuracy']:.3f}, AUC {det['auc']:.4f}")
print(f"hybrid/neural training time: {report['timings']['hybrid_over_neural_ratio']:.3f}")
print(f"artifacts in {out}/")
