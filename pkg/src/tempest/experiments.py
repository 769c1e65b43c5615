"""Config-driven sweeps over strategies, budgets and seeds, plus their aggregation.

A sweep trains one victim per seed (on that seed's 1:3:1 split), computes the
public statistics from the seed's public pool, then runs every strategy at
every budget from scratch. Each (strategy, budget, seed) cell becomes one row
of the results CSV. Columns, in order:

=================  ==========================================================
dataset            dataset name from the config
strategy           strategy label from the config
mode               genvar | genmin | datafree | prada
scaler             adversary scaler kind
fraction           share of initial samples mixed into the queries
target             soft | hard substitute targets
budget             query budget
seed               seed of the cell
accuracy           substitute accuracy on the validation part
fidelity           substitute/victim agreement on the validation part
recall             per-class recall, ``;``-separated, ``nan`` for absent classes
queries            queries charged to the attack
victim_accuracy    accuracy of this seed's victim on the same validation part
n_eval             validation rows
status             ``ok`` or ``error``
error              exception type and message for failed cells
=================  ==========================================================

Floats are written with ``repr`` so the file is byte-identical across runs
and worker counts. Wall-clock times go to a ``.timing.csv`` sidecar.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import datasets, metrics, nn
from .attack import DATA_FREE_BASELINE, PRADA_LIKE, AttackConfig, run_baseline, run_tempest
from .data import load_csv, load_schema, split
from .errors import InvalidArgumentError, MissingFileError, ReportParseError
from .stats import compute_stats, load_stats_file
from .victim import VICTIM_TRAIN, InProcessVictim, train_victim

log = logging.getLogger(__name__)

MODES = ("genvar", "genmin", "datafree", "prada")
DEFAULT_BUDGETS = (20, 100, 500, 2500)
ARRHYTHMIA_BUDGETS = (76, 380, 1900)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

COLUMNS = ("dataset", "strategy", "mode", "scaler", "fraction", "target", "budget", "seed",
           "accuracy", "fidelity", "recall", "queries", "victim_accuracy", "n_eval",
           "status", "error")
TIMING_COLUMNS = ("dataset", "strategy", "budget", "seed", "wall_time")


@dataclass(frozen=True)
class Strategy:
    name: str
    mode: str
    scaler: str = "standard"
    fraction: float = 0.0
    target: str = "soft"
    per_class: bool = False
    scaler_source: str = "from-stats"
    stats_file: str | None = None
    # budget -> number of genuine rows, overriding the defaults
    initial_counts: dict | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"strategy {self.name!r}: unknown mode {self.mode!r}")
        if not 0.0 <= self.fraction < 1.0:
            raise InvalidArgumentError(f"strategy {self.name!r}: fraction must lie in [0, 1)")
        if self.initial_counts is not None:
            object.__setattr__(self, "initial_counts",
                               {int(k): int(v) for k, v in self.initial_counts.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    strategies: tuple
    budgets: tuple = DEFAULT_BUDGETS
    seeds: tuple = DEFAULT_SEEDS
    csv: str | None = None
    schema: str | None = None
    victim_scaler: str = "standard"
    victim_train: nn.TrainConfig = VICTIM_TRAIN
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    hidden_dim: int = 90
    prada_lambda: float = 0.1
    output: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.strategies:
            raise InvalidArgumentError("config lists no strategies")
        if not self.seeds:
            raise InvalidArgumentError("config lists no seeds")
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise InvalidArgumentError("budgets must be positive")
        if any(a >= b for a, b in zip(self.budgets, self.budgets[1:])):
            raise InvalidArgumentError("budgets must be strictly increasing")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("strategy names must be unique")
        if (self.csv is None) != (self.schema is None):
            raise InvalidArgumentError("give both csv and schema paths, or neither")


def _train_config(doc, base: nn.TrainConfig) -> nn.TrainConfig:
    doc = dict(doc or {})
    known = {f.name for f in fields(nn.TrainConfig)}
    unknown = set(doc) - known
    if unknown:
        raise InvalidArgumentError(f"unknown training keys {sorted(unknown)}")
    return replace(base, **doc)


def config_from_dict(doc: dict, base_dir=None) -> ExperimentConfig:
    """Build a config from its YAML mapping; relative paths resolve against ``base_dir``."""
    doc = dict(doc or {})
    base_dir = Path(base_dir or ".")

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        if p.is_absolute() or (base_dir / p).exists():
            return str(p if p.is_absolute() else base_dir / p)
        shipped = datasets.resource_path(p.name)
        return str(shipped if shipped.exists() else base_dir / p)

    try:
        dataset = str(doc.pop("dataset"))
        raw_strategies = doc.pop("strategies")
    except KeyError as exc:
        raise InvalidArgumentError(f"config lacks required key {exc}") from None
    strategies = []
    for entry in raw_strategies or []:
        entry = dict(entry)
        entry.setdefault("name", entry.get("mode"))
        if "stats_file" in entry:
            entry["stats_file"] = resolve(entry["stats_file"])
        strategies.append(Strategy(**entry))
    kwargs = {"dataset": dataset, "strategies": tuple(strategies)}
    if "budgets" not in doc and dataset == "arrhythmia":
        kwargs["budgets"] = ARRHYTHMIA_BUDGETS
    for key in ("budgets", "seeds"):
        if key in doc:
            kwargs[key] = tuple(doc.pop(key))
    for key in ("csv", "schema", "output"):
        if key in doc:
            kwargs[key] = resolve(doc.pop(key)) if key != "output" else str(base_dir / doc.pop(key))
    if "train" in doc:
        kwargs["train"] = _train_config(doc.pop("train"), nn.TrainConfig())
    if "victim_train" in doc:
        kwargs["victim_train"] = _train_config(doc.pop("victim_train"), VICTIM_TRAIN)
    for key in ("victim_scaler", "hidden_dim", "prada_lambda"):
        if key in doc:
            kwargs[key] = doc.pop(key)
    if doc:
        raise InvalidArgumentError(f"unknown config keys {sorted(doc)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"config file not found: {path}")
    return config_from_dict(yaml.safe_load(path.read_text()), path.parent)


@dataclass(frozen=True)
class CellRecord:
    dataset: str
    strategy: str
    mode: str
    scaler: str
    fraction: float
    target: str
    budget: int
    seed: int
    accuracy: float = math.nan
    fidelity: float = math.nan
    recall: tuple = ()
    queries: int = 0
    victim_accuracy: float = math.nan
    n_eval: int = 0
    status: str = "ok"
    error: str = ""
    wall_time: float = 0.0

    def row(self) -> list:
        return [self.dataset, self.strategy, self.mode, self.scaler, repr(float(self.fraction)),
                self.target, str(self.budget), str(self.seed), repr(float(self.accuracy)),
                repr(float(self.fidelity)), ";".join(repr(float(r)) for r in self.recall),
                str(self.queries), repr(float(self.victim_accuracy)), str(self.n_eval),
                self.status, self.error]


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for r in self.records:
            w.writerow([r.dataset, r.strategy, r.budget, r.seed, f"{r.wall_time:.3f}"])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        path.with_suffix(".timing.csv").write_text(self.timing_csv())
        return path


def load_dataset(config: ExperimentConfig):
    if config.csv is not None:
        schema = load_schema(config.schema)
        return load_csv(config.csv, schema.features, schema.label_column, schema.class_names)
    return datasets.load(config.dataset)


def _attack_config(config: ExperimentConfig, strat: Strategy, budget: int, seed: int):
    initial_count = (strat.initial_counts or {}).get(budget)
    return AttackConfig(
        gen_mode=strat.mode if strat.mode != "prada" else "genvar", budget=budget,
        scaler=strat.scaler, scaler_source=strat.scaler_source, target_mode=strat.target,
        initial_fraction=strat.fraction, initial_count=initial_count, per_class=strat.per_class,
        train=config.train, hidden_dim=config.hidden_dim, prada_lambda=config.prada_lambda,
        seed=seed,
    )


def _run_cell(config, strat, budget, seed, parts, access, public, stats_cache):
    cfg = _attack_config(config, strat, budget, seed)
    if strat.mode == "prada":
        return run_baseline(access, PRADA_LIKE, parts.victim_train, budget, cfg)
    if strat.mode == "datafree":
        return run_baseline(access, DATA_FREE_BASELINE, None, budget, cfg)
    if strat.stats_file is None:
        stats = public
    else:
        if strat.stats_file not in stats_cache:
            stats_cache[strat.stats_file] = load_stats_file(strat.stats_file, parts.validation.schema)
        stats = stats_cache[strat.stats_file]
    return run_tempest(access, stats, parts.validation.schema, cfg, initial=parts.victim_train)


def _error_text(exc) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


def run_seed(config: ExperimentConfig, dataset, seed: int) -> list:
    """All cells of one seed, in (strategy, budget) config order."""
    base = dict(dataset=config.dataset)
    keys = [(s, b) for s in config.strategies for b in config.budgets]

    def blank(s, b, **kw):
        return CellRecord(strategy=s.name, mode=s.mode, scaler=s.scaler, fraction=s.fraction,
                          target=s.target, budget=b, seed=seed, **base, **kw)

    try:
        parts = split(dataset, seed)
        dep = train_victim(parts.victim_train, config.victim_scaler,
                           replace(config.victim_train, seed=seed), config.hidden_dim)
        v_acc = metrics.accuracy(dep.model, dep.scaler, parts.validation)
        public = compute_stats(parts.public_pool, per_class=any(s.per_class for s in config.strategies))
    except Exception as exc:  # noqa: BLE001 -- the whole seed is recorded as failed
        log.warning("seed %d: victim setup failed: %s", seed, exc)
        return [blank(s, b, status="error", error=_error_text(exc)) for s, b in keys]

    out, stats_cache = [], {}
    for strat, budget in keys:
        access = InProcessVictim(dep)
        t0 = time.perf_counter()
        try:
            res = _run_cell(config, strat, budget, seed, parts, access, public, stats_cache)
            ev = metrics.evaluate(res.model, res.scaler, access, parts.validation)
        except Exception as exc:  # noqa: BLE001 -- recorded per cell, the sweep goes on
            log.warning("cell %s/%d/seed %d failed: %s", strat.name, budget, seed, exc)
            out.append(blank(strat, budget, victim_accuracy=v_acc, n_eval=len(parts.validation),
                             queries=access.queries, status="error", error=_error_text(exc),
                             wall_time=time.perf_counter() - t0))
            continue
        out.append(blank(strat, budget, accuracy=ev.accuracy, fidelity=ev.fidelity,
                         recall=ev.per_class_recall, queries=res.queries_used,
                         victim_accuracy=v_acc, n_eval=ev.n_evaluated,
                         wall_time=time.perf_counter() - t0))
    return out


def run_sweep(config: ExperimentConfig, workers: int = 1, dataset=None) -> ExperimentResult:
    """Run every (strategy, budget, seed) cell; seeds are spread over ``workers`` processes.

    A missing dataset is fatal; any other failure is recorded in its cell(s).
    """
    if workers < 1:
        raise InvalidArgumentError("workers must be >= 1")
    dataset = dataset if dataset is not None else load_dataset(config)
    if workers == 1 or len(config.seeds) == 1:
        per_seed = [run_seed(config, dataset, s) for s in config.seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(config.seeds))) as pool:
            futures = [pool.submit(run_seed, config, dataset, s) for s in config.seeds]
            per_seed = [f.result() for f in futures]
    records = tuple(r for seed_rows in per_seed for r in seed_rows)
    return ExperimentResult(config=config, records=records)


# -- aggregation --------------------------------------------------------------

@dataclass(frozen=True)
class SeriesPoint:
    budget: int
    n: int
    accuracy_mean: float
    accuracy_std: float
    fidelity_mean: float
    fidelity_std: float


def _parse_float(text, line, column):
    try:
        return float(text)
    except ValueError:
        raise ReportParseError(f"column {column!r}: not a number: {text!r}", line) from None


def _parse_int(text, line, column):
    try:
        return int(text)
    except ValueError:
        raise ReportParseError(f"column {column!r}: not an integer: {text!r}", line) from None


def read_results(path) -> list:
    """Parse a results CSV into dicts; raises :class:`ReportParseError` with a line number."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"results file not found: {path}")
    text = path.read_text()
    if not text.strip():
        raise ReportParseError("results file is empty", 1)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != COLUMNS:
        raise ReportParseError(f"unexpected header {header}", 1)
    rows = []
    for cells in reader:
        line = reader.line_num
        if not cells:
            continue
        if len(cells) != len(COLUMNS):
            raise ReportParseError(f"expected {len(COLUMNS)} fields, got {len(cells)}", line)
        rec = dict(zip(COLUMNS, cells))
        for key in ("budget", "seed", "queries", "n_eval"):
            rec[key] = _parse_int(rec[key], line, key)
        for key in ("fraction", "accuracy", "fidelity", "victim_accuracy"):
            rec[key] = _parse_float(rec[key], line, key)
        rec["recall"] = tuple(_parse_float(x, line, "recall") for x in rec["recall"].split(";")
                              if x != "")
        if rec["status"] not in ("ok", "error"):
            raise ReportParseError(f"unknown status {rec['status']!r}", line)
        rec["line"] = line
        rows.append(rec)
    if not rows:
        raise ReportParseError("results file has a header but no records", 2)
    return rows


def aggregate(rows) -> dict:
    """``{(dataset, strategy): [SeriesPoint, ...]}`` over successful cells, budgets ascending.

    Standard deviations are population (ddof=0) deviations over seeds.
    """
    groups: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        groups.setdefault((r["dataset"], r["strategy"]), {}).setdefault(r["budget"], []).append(r)
    out = {}
    for key, by_budget in groups.items():
        series = []
        for b in sorted(by_budget):
            acc = np.array([r["accuracy"] for r in by_budget[b]])
            fid = np.array([r["fidelity"] for r in by_budget[b]])
            series.append(SeriesPoint(b, len(acc), float(acc.mean()), float(acc.std()),
                                      float(fid.mean()), float(fid.std())))
        out[key] = series
    return out


def victim_summary(rows) -> dict:
    """Mean and std of victim accuracy per dataset, one value per seed."""
    per: dict = {}
    for r in rows:
        if not math.isnan(r["victim_accuracy"]):
            per.setdefault(r["dataset"], {})[r["seed"]] = r["victim_accuracy"]
    return {d: (float(np.mean(list(v.values()))), float(np.std(list(v.values()))), len(v))
            for d, v in per.items()}


def _slug(text) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def report(in_path, out_dir) -> dict:
    """Write one series CSV per (dataset, strategy) plus ``summary.md``; returns the series."""
    rows = read_results(in_path)
    series = aggregate(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (ds, strat), points in series.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["budget", "n", "accuracy_mean", "accuracy_std", "fidelity_mean", "fidelity_std"])
        for p in points:
            w.writerow([p.budget, p.n, repr(p.accuracy_mean), repr(p.accuracy_std),
                        repr(p.fidelity_mean), repr(p.fidelity_std)])
        (out_dir / f"{_slug(ds)}__{_slug(strat)}.csv").write_text(buf.getvalue())

    failed = sum(r["status"] != "ok" for r in rows)
    lines = ["# Sweep summary", "", f"{len(rows)} records, {failed} failed.", "",
             "## Victims", "", "| dataset | seeds | accuracy (%) |", "|---|---|---|"]
    for ds, (m, s, n) in sorted(victim_summary(rows).items()):
        lines.append(f"| {ds} | {n} | {100 * m:.2f} ± {100 * s:.2f} |")
    lines += ["", "## Substitutes", "",
              "| dataset | strategy | budget | n | accuracy (%) | fidelity (%) |",
              "|---|---|---|---|---|---|"]
    for (ds, strat), points in series.items():
        for p in points:
            lines.append(f"| {ds} | {strat} | {p.budget} | {p.n} | "
                         f"{100 * p.accuracy_mean:.2f} ± {100 * p.accuracy_std:.2f} | "
                         f"{100 * p.fidelity_mean:.2f} ± {100 * p.fidelity_std:.2f} |")
    (out_dir / "summary.md").write_text("\n".join(lines) + "\n")
    return series
