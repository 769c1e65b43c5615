"""Command-line entry point: ``tempest <subcommand>``.

``sweep`` and ``report`` drive the experiment harness; ``train-victim``,
``serve-victim``, ``generate``, ``extract`` and ``evaluate`` run the same
pipeline one step at a time, exchanging files:

    tempest train-victim --dataset diabetes --out victim.json --split-dir parts/
    tempest serve-victim --deployment victim.json --addr 127.0.0.1:8700
    tempest extract --victim http://127.0.0.1:8700 --stats parts/public_pool.csv \\
        --mode genvar --budget 500 --out substitute.json
    tempest evaluate --result substitute.json --victim victim.json \\
        --validation parts/validation.csv
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import datasets, metrics, nn
from .attack import (
    DATA_FREE_BASELINE,
    FROM_STATS,
    FIT_ON_GENERATED,
    PRADA_LIKE,
    AttackConfig,
    load_result,
    run_baseline,
    run_tempest,
    save_result,
)
from .data import load_csv, load_schema, split, write_csv
from .errors import TempestError
from .experiments import load_config, report, run_sweep
from .querygen import GenMode, generate
from .stats import compute_stats, load_stats_file
from .victim import (
    VICTIM_TRAIN,
    InProcessVictim,
    RemoteVictim,
    load_deployment,
    save_deployment,
    serve,
    train_victim,
    with_response_mode,
)

log = logging.getLogger("tempest")

LABEL = "label"


def _access(target: str):
    if target.startswith(("http://", "https://")):
        return RemoteVictim(target)
    return InProcessVictim(load_deployment(target))


def _is_csv(path) -> bool:
    return str(path).lower().endswith(".csv")


def _load_rows(path, access, label_column=LABEL):
    return load_csv(path, access.schema, label_column, access.class_names)


def _stats(path, access, label_column=LABEL):
    """A statistics file, or statistics computed from a labeled CSV pool."""
    if _is_csv(path):
        return compute_stats(_load_rows(path, access, label_column))
    return load_stats_file(path, access.schema)


def cmd_fetch_data(args):
    for name in args.names or sorted(datasets.FETCHERS):
        if name not in datasets.FETCHERS:
            print(f"unknown dataset {name!r}", file=sys.stderr)
            return 2
        try:
            csv_path, _ = datasets.fetch(name, args.cache_dir, refresh=args.refresh)
            print(f"{name}: {csv_path}")
        except TempestError as exc:
            print(f"{name}: unavailable ({exc})", file=sys.stderr)
            if args.names:
                return 1
    return 0


def cmd_train_victim(args):
    if args.csv:
        schema = load_schema(args.schema)
        ds = load_csv(args.csv, schema.features, schema.label_column, schema.class_names)
    else:
        ds = datasets.load(args.dataset, args.cache_dir)
    parts = split(ds, args.seed)
    cfg = nn.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                         batch_size=_batch(args.batch_size), target_mode="hard", seed=args.seed)
    dep = train_victim(parts.victim_train, args.scaler, cfg, args.hidden, args.response_mode)
    save_deployment(dep, args.out)
    acc = metrics.accuracy(dep.model, dep.scaler, parts.validation)
    print(json.dumps({"deployment": str(args.out), "validation_accuracy": acc,
                      "rows": {k: len(v) for k, v in parts.parts().items()}}))
    if args.split_dir:
        out = Path(args.split_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, part in parts.parts().items():
            write_csv(part, out / f"{name}.csv", LABEL)
    return 0


def cmd_serve_victim(args):
    dep = load_deployment(args.deployment)
    if args.response_mode:
        dep = with_response_mode(dep, args.response_mode)
    svc = serve(dep, args.addr)
    print(f"serving on {svc.url}", flush=True)
    svc.serve_forever()
    return 0


def _batch(text):
    return text if text == nn.AUTO else int(text)


def cmd_extract(args):
    access = _access(args.victim)
    train = nn.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                           batch_size=_batch(args.batch_size))
    cfg = AttackConfig(gen_mode=args.mode if args.mode in ("genvar", "genmin", "datafree") else "genvar",
                       budget=args.budget, scaler=args.scaler, scaler_source=args.scaler_source,
                       target_mode=args.target, initial_fraction=args.fraction,
                       per_class=args.per_class, train=train, hidden_dim=args.hidden, seed=args.seed)
    initial = _load_rows(args.initial, access) if args.initial else None
    if args.mode == "prada":
        res = run_baseline(access, PRADA_LIKE, initial, args.budget, cfg)
    elif args.mode == "datafree":
        res = run_baseline(access, DATA_FREE_BASELINE, None, args.budget, cfg)
    else:
        stats = _stats(args.stats, access) if args.stats else None
        res = run_tempest(access, stats, access.schema, cfg, initial=initial)
    save_result(res, args.out, extra={"mode": args.mode, "budget": args.budget, "seed": args.seed})
    print(json.dumps({"result": str(args.out), "queries_used": res.queries_used,
                      "final_loss": res.loss_trace[-1]}))
    return 0


def cmd_evaluate(args):
    model, scaler, _ = load_result(args.result)
    access = _access(args.victim)
    rows = _load_rows(args.validation, access)
    ev = metrics.evaluate(model, scaler, access, rows, count_queries=args.count_queries)
    print(json.dumps({"accuracy": ev.accuracy, "fidelity": ev.fidelity,
                      "per_class_recall": list(ev.per_class_recall),
                      "n_evaluated": ev.n_evaluated}))
    return 0


def cmd_generate(args):
    schema = load_schema(args.schema).features
    stats = None
    if args.stats:
        if _is_csv(args.stats):
            sch = load_schema(args.schema)
            stats = compute_stats(load_csv(args.stats, sch.features, args.label_column, sch.class_names))
        else:
            stats = load_stats_file(args.stats, schema)
    batch = generate(stats, GenMode(args.mode, per_class=args.per_class, seed=args.seed), args.n,
                     schema)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow([f.name for f in schema])
        for rec in batch.records():
            w.writerow([repr(c) if isinstance(c, float) else c for c in rec])
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_sweep(args):
    config = load_config(args.config)
    out = args.out or config.output
    if not out:
        print("no output path: pass --out or set 'output' in the config", file=sys.stderr)
        return 2
    result = run_sweep(config, workers=args.workers)
    result.write(out)
    failed = sum(r.status != "ok" for r in result.records)
    print(f"{len(result)} records ({failed} failed) -> {out}")
    return 0


def cmd_report(args):
    series = report(args.inp, args.out_dir)
    print(f"{len(series)} series -> {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tempest", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def training(sp, batch_default):
        sp.add_argument("--lr", type=float, default=0.01)
        sp.add_argument("--epochs", type=int, default=30)
        sp.add_argument("--batch-size", default=batch_default, help="integer or 'auto'")
        sp.add_argument("--hidden", type=int, default=90)

    sp = sub.add_parser("fetch-data", help="materialize benchmark datasets in the cache")
    sp.add_argument("names", nargs="*", metavar="NAME", help=", ".join(sorted(datasets.FETCHERS)))
    sp.add_argument("--cache-dir")
    sp.add_argument("--refresh", action="store_true")
    sp.set_defaults(func=cmd_fetch_data)

    sp = sub.add_parser("train-victim", help="split a dataset and train a victim deployment")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", choices=sorted(datasets.FETCHERS))
    src.add_argument("--csv")
    sp.add_argument("--schema", help="schema file for --csv")
    sp.add_argument("--cache-dir")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scaler", choices=("standard", "minmax"), default="standard")
    sp.add_argument("--response-mode", choices=("soft", "hard"), default="soft")
    sp.add_argument("--split-dir", help="also write the three split parts as CSV here")
    sp.add_argument("--out", required=True)
    training(sp, str(VICTIM_TRAIN.batch_size))
    sp.set_defaults(func=cmd_train_victim)

    sp = sub.add_parser("serve-victim", help="serve a deployment over HTTP")
    sp.add_argument("--deployment", required=True)
    sp.add_argument("--addr", default="127.0.0.1:8700")
    sp.add_argument("--response-mode", choices=("soft", "hard"))
    sp.set_defaults(func=cmd_serve_victim)

    sp = sub.add_parser("generate", help="write synthetic query rows as CSV")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--stats", help="statistics file or labeled pool CSV")
    sp.add_argument("--mode", choices=("genvar", "genmin", "datafree"), default="genvar")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--label-column", default=LABEL, help="label column of a pool CSV")
    sp.add_argument("--per-class", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("extract", help="train a substitute against a victim")
    sp.add_argument("--victim", required=True, help="service URL or deployment file")
    sp.add_argument("--stats", help="statistics file or labeled pool CSV")
    sp.add_argument("--mode", choices=("genvar", "genmin", "datafree", "prada"), default="genvar")
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--scaler", choices=("standard", "minmax"), default="standard")
    sp.add_argument("--scaler-source", choices=(FROM_STATS, FIT_ON_GENERATED), default=FROM_STATS)
    sp.add_argument("--target", choices=("soft", "hard"), default="soft")
    sp.add_argument("--fraction", type=float, default=0.0, help="share of initial samples")
    sp.add_argument("--initial", help="labeled CSV of genuine rows (prada, --fraction)")
    sp.add_argument("--per-class", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    training(sp, nn.AUTO)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("evaluate", help="accuracy, fidelity and recall of a substitute")
    sp.add_argument("--result", required=True)
    sp.add_argument("--victim", required=True, help="service URL or deployment file")
    sp.add_argument("--validation", required=True, help="labeled CSV")
    sp.add_argument("--count-queries", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="run an experiment config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="aggregate a results CSV into series files")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TempestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
