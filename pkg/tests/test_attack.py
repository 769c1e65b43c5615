import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempest import metrics, nn, victim
from tempest.attack import (
    DATA_FREE_BASELINE,
    FIT_ON_GENERATED,
    PRADA_LIKE,
    AttackConfig,
    load_result,
    prada_rounds,
    run_baseline,
    run_tempest,
    save_result,
)
from tempest.data import EncodingMap, split
from tempest.errors import InvalidArgumentError
from tempest.scaling import fit_encoded, fit_from_stats
from tempest.stats import FeatureStats, PublicStats, compute_stats

from conftest import make_dataset

FAST = nn.TrainConfig(epochs=3)


@pytest.fixture(scope="module")
def world():
    ds = make_dataset(400, seed=7)
    parts = split(ds, 1)
    dep = victim.train_victim(parts.victim_train, "standard",
                              nn.TrainConfig(epochs=10, batch_size=8, target_mode="hard"))
    return parts, dep, compute_stats(parts.public_pool)


def _run(world, strategy, budget, **kw):
    parts, dep, stats = world
    access = victim.InProcessVictim(dep)
    kw.setdefault("train", FAST)
    cfg = AttackConfig(budget=budget, **kw)
    if strategy == "prada":
        return access, run_baseline(access, PRADA_LIKE, parts.victim_train, budget, cfg)
    if strategy == "datafree":
        return access, run_baseline(access, DATA_FREE_BASELINE, None, budget, cfg)
    return access, run_tempest(access, stats, None, replace_mode(cfg, strategy),
                               initial=parts.victim_train)


def replace_mode(cfg, strategy):
    from dataclasses import replace
    if strategy == "init":
        return replace(cfg, initial_fraction=0.1)
    return replace(cfg, gen_mode=strategy)


@settings(max_examples=20, deadline=None)
@given(strategy=st.sampled_from(["genvar", "genmin", "datafree", "prada", "init"]),
       budget=st.integers(1, 90))
def test_queries_used_equals_budget(world, strategy, budget):
    if strategy == "init" and budget < 2:
        budget = 2
    access, res = _run(world, strategy, budget)
    assert res.queries_used == budget == access.queries
    assert len(res.batch) == budget and res.labels.shape == (budget, 2)


def test_budget_one_predicts_victim_label(world):
    _, dep, _ = world
    access, res = _run(world, "genvar", 1, train=nn.TrainConfig(epochs=200))
    label = int(np.argmax(res.labels[0]))
    assert nn.predict(res.model, res.inputs).tolist() == [label]


def test_zero_budget_rejected():
    with pytest.raises(InvalidArgumentError):
        AttackConfig(budget=0)
    with pytest.raises(InvalidArgumentError):
        AttackConfig(initial_fraction=1.0)


def test_prada_uses_ten_seeds_per_class_and_doubles(world):
    _, r20 = _run(world, "prada", 20)
    assert r20.rounds == 0 and r20.batch.counts() == {"initial-sample": 20}
    _, r40 = _run(world, "prada", 40)
    assert r40.rounds == 1 and r40.batch.counts() == {"initial-sample": 20, "augmented": 20}
    _, r50 = _run(world, "prada", 50)
    assert r50.rounds == 2 and r50.batch.counts() == {"initial-sample": 20, "augmented": 30}
    assert [prada_rounds(20, b) for b in (20, 40, 41, 80, 100)] == [0, 1, 2, 2, 3]


def test_prada_initial_count_override(world):
    _, res = _run(world, "prada", 76, initial_count=11)
    assert res.batch.counts()["initial-sample"] == 11 and res.queries_used == 76


def test_prada_without_initial_rejected(world):
    parts, dep, _ = world
    with pytest.raises(InvalidArgumentError):
        run_baseline(victim.InProcessVictim(dep), PRADA_LIKE, None, 20, AttackConfig(train=FAST))
    with pytest.raises(InvalidArgumentError):
        run_baseline(victim.InProcessVictim(dep), "gan", None, 20, AttackConfig(train=FAST))


def test_attack_is_deterministic(world):
    _, a = _run(world, "genvar", 80, seed=5)
    _, b = _run(world, "genvar", 80, seed=5)
    _, c = _run(world, "genvar", 80, seed=6)
    assert nn.model_to_bytes(a.model) == nn.model_to_bytes(b.model)
    assert not a.model.equals(c.model)


def test_initial_fraction_needs_samples(world):
    parts, dep, stats = world
    with pytest.raises(InvalidArgumentError):
        run_tempest(victim.InProcessVictim(dep), stats, None,
                    AttackConfig(budget=20, initial_fraction=0.1, train=FAST))


def test_adversary_scaler_sources(world):
    parts, dep, stats = world
    _, res = _run(world, "genvar", 100)
    assert res.scaler.equals(fit_from_stats("standard", stats))
    _, res = _run(world, "genvar", 100, scaler_source=FIT_ON_GENERATED)
    enc = EncodingMap.from_schema(res.batch.schema)
    assert res.scaler.equals(fit_encoded("standard", res.batch.encoded(), enc))


def test_partial_stats_fall_back_per_feature(world):
    parts, dep, stats = world
    partial = PublicStats(stats.schema, {"x1": stats.feature("x1")}, stats.pools)
    res = run_tempest(victim.InProcessVictim(dep), partial, None, AttackConfig(budget=200, train=FAST))
    enc = EncodingMap.from_schema(res.batch.schema)
    fitted = fit_encoded("standard", res.batch.encoded(), enc)
    assert res.scaler.a[0] == stats.feature("x1").mean
    assert res.scaler.a[4] == fitted.a[4] and res.scaler.b[4] == fitted.b[4]


def test_genvar_substitute_learns_victim(world):
    parts, dep, stats = world
    access, res = _run(world, "genvar", 1000, train=nn.TrainConfig())
    ev = metrics.evaluate(res.model, res.scaler, access, parts.validation)
    assert ev.fidelity > 0.8
    assert access.queries == 1000  # evaluation is not charged


def test_result_file_round_trip(world, tmp_path):
    _, res = _run(world, "genmin", 30)
    save_result(res, tmp_path / "r.json", extra={"mode": "genmin"})
    model, scaler, doc = load_result(tmp_path / "r.json")
    assert model.equals(res.model) and scaler.equals(res.scaler)
    assert doc["queries_used"] == 30 and doc["mode"] == "genmin"
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(InvalidArgumentError):
        load_result(tmp_path / "x.json")


def test_soft_and_hard_targets_differ(world):
    _, soft = _run(world, "genvar", 60)
    _, hard = _run(world, "genvar", 60, target_mode="hard")
    np.testing.assert_array_equal(soft.labels, hard.labels)
    assert not soft.model.equals(hard.model)


def test_unavailable_stats_without_fallback(world):
    parts, dep, stats = world
    empty = PublicStats(stats.schema, {"x1": FeatureStats()}, stats.pools)
    with pytest.raises(Exception) as info:
        run_tempest(victim.InProcessVictim(dep), empty, None,
                    AttackConfig(budget=10, fallback=False, train=FAST))
    assert type(info.value).__name__ == "UnavailableStatisticError"
