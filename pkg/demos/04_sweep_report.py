"""
A small sweep and its report
============================

Run the normalization cross-product on diabetes (two generators times two
adversary scalers, three seeds) and aggregate it into series files.
"""
import tempfile
from pathlib import Path

from tempest.experiments import ExperimentConfig, Strategy, report, run_sweep

cfg = ExperimentConfig(
    dataset="diabetes",
    budgets=(100, 500, 2500),
    seeds=(0, 1, 2),
    strategies=(
        Strategy("genvar-std", "genvar"),
        Strategy("genvar-minmax", "genvar", scaler="minmax"),
        Strategy("genmin-std", "genmin"),
        Strategy("genmin-minmax", "genmin", scaler="minmax"),
    ),
)
result = run_sweep(cfg)
print(len(result), "cells")

out = Path(tempfile.mkdtemp(prefix="tempest-"))
result.write(out / "results.csv")
series = report(out / "results.csv", out / "report")
for (dataset, strategy), points in series.items():
    line = "  ".join(f"{p.budget}: {100 * p.accuracy_mean:.1f}±{100 * p.accuracy_std:.1f}"
                     for p in points)
    print(f"{strategy:14s} {line}")
print((out / "report" / "summary.md").read_text())
