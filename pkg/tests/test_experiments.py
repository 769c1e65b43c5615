import math

import numpy as np
import pytest

from tempest import experiments, nn
from tempest.data import DatasetSchema, dump_schema, write_csv
from tempest.errors import InvalidArgumentError, MissingFileError, ReportParseError
from tempest.experiments import ExperimentConfig, Strategy, run_sweep

from conftest import make_dataset

FAST = nn.TrainConfig(epochs=2)
VFAST = nn.TrainConfig(epochs=3, batch_size=8, target_mode="hard")


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    ds = make_dataset(250, seed=11)
    write_csv(ds, d / "synth.csv", "label")
    dump_schema(DatasetSchema(ds.schema, "label", ds.class_names), d / "synth.yaml")
    return d, ds


def config(synth, strategies, budgets=(20,), seeds=(0,)):
    d, _ = synth
    return ExperimentConfig(dataset="synth", strategies=tuple(strategies), budgets=budgets,
                            seeds=seeds, csv=str(d / "synth.csv"), schema=str(d / "synth.yaml"),
                            train=FAST, victim_train=VFAST, hidden_dim=8)


def test_single_cell(synth):
    res = run_sweep(config(synth, [Strategy("g", "genvar")]))
    assert len(res) == 1
    r = res.records[0]
    assert r.status == "ok" and r.queries == 20 and r.n_eval == 150
    assert 0 <= r.accuracy <= 1 and 0 <= r.fidelity <= 1 and len(r.recall) == 2


def test_cardinality_is_strategies_times_budgets_times_seeds(synth):
    cfg = config(synth, [Strategy("g", "genvar"), Strategy("p", "prada")], budgets=(20, 40),
                 seeds=(0, 1))
    res = run_sweep(cfg)
    assert len(res) == 8
    cells = {(r.strategy, r.budget, r.seed) for r in res.records}
    assert len(cells) == 8
    assert len(res.to_csv().splitlines()) == 9


def test_csv_is_byte_identical_across_runs_and_workers(synth):
    cfg = config(synth, [Strategy("g", "genmin"), Strategy("d", "datafree")], budgets=(20, 30),
                 seeds=(0, 1))
    a, b = run_sweep(cfg).to_csv(), run_sweep(cfg).to_csv()
    c = run_sweep(cfg, workers=2).to_csv()
    assert a == b == c


def test_failing_cell_is_recorded_not_fatal(synth):
    # 90% of 400 queries needs 360 initial rows, more than the 50-row victim split holds
    cfg = config(synth, [Strategy("ok", "genvar"), Strategy("bad", "genvar", fraction=0.9)],
                 budgets=(400,))
    res = run_sweep(cfg)
    by = {r.strategy: r for r in res.records}
    assert by["ok"].status == "ok"
    assert by["bad"].status == "error" and "ClassShortfallError" in by["bad"].error
    assert math.isnan(by["bad"].accuracy)


def test_missing_dataset_is_fatal(tmp_path, synth):
    d, _ = synth
    cfg = ExperimentConfig(dataset="x", strategies=(Strategy("g", "genvar"),),
                           csv=str(tmp_path / "none.csv"), schema=str(d / "synth.yaml"))
    with pytest.raises(MissingFileError):
        run_sweep(cfg)


def test_config_validation():
    s = (Strategy("g", "genvar"),)
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig("d", s, budgets=(100, 20))
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig("d", s, budgets=(0,))
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig("d", (), budgets=(10,))
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig("d", s * 2)
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig("d", s, csv="a.csv")
    with pytest.raises(InvalidArgumentError):
        Strategy("g", "gan")


def test_load_config_from_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("dataset: arrhythmia\n"
                 "strategies:\n  - {mode: prada, initial_counts: {76: 11}}\n"
                 "train: {epochs: 4}\noutput: out/r.csv\n")
    cfg = experiments.load_config(p)
    assert cfg.budgets == experiments.ARRHYTHMIA_BUDGETS
    assert cfg.strategies[0].name == "prada" and cfg.strategies[0].initial_counts == {76: 11}
    assert cfg.train.epochs == 4 and cfg.output == str(tmp_path / "out/r.csv")
    p.write_text("dataset: d\nstrategies: [{mode: genvar}]\ncolour: red\n")
    with pytest.raises(InvalidArgumentError):
        experiments.load_config(p)
    p.write_text("dataset: d\nstrategies: [{mode: genvar}]\ntrain: {lr: 1}\n")
    with pytest.raises(InvalidArgumentError):
        experiments.load_config(p)


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.yaml")):
        cfg = experiments.load_config(p)
        assert cfg.output.endswith(".csv")


def _record(strategy, budget, seed, acc, fid, status="ok"):
    return experiments.CellRecord("d", strategy, "genvar", "standard", 0.0, "soft", budget, seed,
                                  accuracy=acc, fidelity=fid, recall=(acc, fid), queries=budget,
                                  victim_accuracy=0.9, n_eval=10, status=status)


def write_records(path, records, cfg=None):
    res = experiments.ExperimentResult(cfg, tuple(records))
    path.write_text(res.to_csv())
    return path


def test_report_averaging_oracle(tmp_path):
    recs = [_record("g", 20, 0, 0.5, 0.6), _record("g", 20, 1, 0.7, 1.0),
            _record("g", 100, 0, 0.8, 0.8), _record("g", 100, 1, math.nan, math.nan, "error")]
    series = experiments.report(write_records(tmp_path / "r.csv", recs), tmp_path / "out")
    p20, p100 = series[("d", "g")]
    assert (p20.budget, p20.n) == (20, 2)
    assert p20.accuracy_mean == pytest.approx(0.6) and p20.accuracy_std == pytest.approx(0.1)
    assert p20.fidelity_mean == pytest.approx(0.8) and p20.fidelity_std == pytest.approx(0.2)
    # a lone record has zero spread
    assert (p100.n, p100.accuracy_std, p100.fidelity_std) == (1, 0.0, 0.0)
    summary = (tmp_path / "out" / "summary.md").read_text()
    assert "4 records, 1 failed." in summary and "| d | g | 20 | 2 | 60.00 ± 10.00 |" in summary
    assert (tmp_path / "out" / "d__g.csv").read_text().splitlines()[1].startswith("20,2,")


def test_report_round_trips_repr_floats(tmp_path):
    x = 1 / 3
    rows = experiments.read_results(write_records(tmp_path / "r.csv", [_record("g", 5, 0, x, x)]))
    assert rows[0]["accuracy"] == x and rows[0]["recall"] == (x, x)


def test_report_parse_errors(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("")
    with pytest.raises(ReportParseError) as info:
        experiments.read_results(p)
    assert info.value.line == 1
    p.write_text(",".join(experiments.COLUMNS) + "\n")
    with pytest.raises(ReportParseError) as info:
        experiments.read_results(p)
    assert info.value.line == 2
    good = write_records(p, [_record("g", 5, 0, 0.5, 0.5)] * 2).read_text().splitlines()
    bad = good[:2] + [good[2].replace(",5,0,", ",five,0,", 1)]
    p.write_text("\n".join(bad) + "\n")
    with pytest.raises(ReportParseError) as info:
        experiments.read_results(p)
    assert info.value.line == 3
    p.write_text("\n".join(good[:2] + ["a,b,c"]) + "\n")
    with pytest.raises(ReportParseError) as info:
        experiments.read_results(p)
    assert info.value.line == 3
    p.write_text("x,y\n1,2\n")
    with pytest.raises(ReportParseError) as info:
        experiments.read_results(p)
    assert info.value.line == 1
    with pytest.raises(MissingFileError):
        experiments.read_results(tmp_path / "none.csv")


def test_write_emits_timing_sidecar(synth, tmp_path):
    res = run_sweep(config(synth, [Strategy("g", "genvar")]))
    out = res.write(tmp_path / "r" / "res.csv")
    assert out.read_text() == res.to_csv()
    timing = (tmp_path / "r" / "res.timing.csv").read_text().splitlines()
    assert timing[0] == ",".join(experiments.TIMING_COLUMNS) and len(timing) == 2
    assert "wall" not in out.read_text()


def test_victim_accuracy_is_shared_per_seed(synth):
    res = run_sweep(config(synth, [Strategy("a", "genvar"), Strategy("b", "genmin")], seeds=(0, 1)))
    by_seed = {}
    for r in res.records:
        by_seed.setdefault(r.seed, set()).add(r.victim_accuracy)
    assert all(len(v) == 1 for v in by_seed.values())
    assert np.isfinite(list(by_seed[0])[0])
