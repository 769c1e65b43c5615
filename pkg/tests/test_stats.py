import numpy as np
import pytest

from tempest import stats
from tempest.data import CATEGORICAL, FeatureSpec
from tempest.datasets import resource_path
from tempest.errors import InvalidArgumentError, MissingClassError, MissingFileError, SchemaMismatchError

from conftest import make_dataset

DIABETES = tuple(FeatureSpec(n) for n in ("Pregnancies", "Glucose", "BloodPressure", "SkinThickness",
                                           "Insulin", "BMI", "DiabetesPedigreeFunction", "Age"))


def test_compute_stats_matches_numpy(mixed):
    s = stats.compute_stats(mixed)
    for j, name in enumerate(["x1", "x2"]):
        col = mixed.numeric[:, j]
        f = s.feature(name)
        assert f.mean == pytest.approx(np.mean(col), abs=1e-12)
        assert f.variance == pytest.approx(np.var(col), abs=1e-12)
        assert (f.min, f.max) == (col.min(), col.max())
    colors = mixed.categorical[:, 0].tolist()
    assert s.pool("color") == {c: colors.count(c) for c in ("red", "green", "blue") if c in colors}
    assert sum(s.pool("size").values()) == len(mixed)


def test_per_class_overlay(mixed):
    s = stats.compute_stats(mixed, per_class=True)
    for c in (0, 1):
        rows = mixed.numeric[mixed.labels == c, 0]
        assert s.for_class(c).feature("x1").mean == pytest.approx(rows.mean(), abs=1e-12)
    with pytest.raises(MissingClassError):
        s.for_class(5)
    with pytest.raises(MissingClassError):
        stats.compute_stats(mixed).for_class(0)


def test_constant_column_mean_stays_inside_extremes():
    ds = make_dataset(7)
    ds = type(ds)(ds.schema, np.full_like(ds.numeric, 0.1), ds.categorical, ds.labels, ds.class_names)
    f = stats.compute_stats(ds).feature("x1")
    assert f.min <= f.mean <= f.max and f.variance == pytest.approx(0.0, abs=1e-30)


def test_shipped_real_world_file_has_five_features():
    s = stats.load_stats_file(resource_path("diabetes_realworld_stats.yaml"), DIABETES)
    full = [n for n in (f.name for f in DIABETES) if s.feature(n).has("mean", "variance")]
    assert full == ["Glucose", "BloodPressure", "Insulin", "BMI", "Age"]
    for name in ("Pregnancies", "SkinThickness", "DiabetesPedigreeFunction"):
        assert not any(s.feature(name).available.values())


def test_empty_stats_file_means_nothing_available(tmp_path):
    (tmp_path / "e.yaml").write_text("")
    s = stats.load_stats_file(tmp_path / "e.yaml", DIABETES)
    assert all(not any(s.feature(f.name).available.values()) for f in DIABETES)


def test_stats_file_round_trip(tmp_path, mixed):
    s = stats.compute_stats(mixed, per_class=True)
    stats.dump_stats_file(s, tmp_path / "s.yaml")
    back = stats.load_stats_file(tmp_path / "s.yaml", mixed.schema)
    assert back.to_dict() == s.to_dict()


def test_stats_file_list_pool_and_partial_fields(tmp_path):
    schema = (FeatureSpec("a"), FeatureSpec("k", CATEGORICAL, ("x", "y")))
    (tmp_path / "s.yaml").write_text("features:\n  a: {min: 0, max: 4}\npools:\n  k: [x, y, x]\n")
    s = stats.load_stats_file(tmp_path / "s.yaml", schema)
    assert s.feature("a").available == {"mean": False, "variance": False, "min": True, "max": True}
    assert s.pool("k") == {"x": 2, "y": 1}


@pytest.mark.parametrize("text", ["features:\n  zzz: {mean: 1}\n", "features:\n  k: {mean: 1}\n",
                                  "features:\n  a: {median: 1}\n", "pools:\n  a: [1]\n",
                                  "per_class:\n  one: {}\n", "- 1\n"])
def test_stats_file_errors(tmp_path, text):
    schema = (FeatureSpec("a"), FeatureSpec("k", CATEGORICAL, ("x",)))
    (tmp_path / "s.yaml").write_text(text)
    with pytest.raises(SchemaMismatchError):
        stats.load_stats_file(tmp_path / "s.yaml", schema)


def test_stats_file_missing(tmp_path):
    with pytest.raises(MissingFileError):
        stats.load_stats_file(tmp_path / "nope.yaml", DIABETES)


def test_feature_stats_validation():
    with pytest.raises(InvalidArgumentError):
        stats.FeatureStats(variance=-1)
    with pytest.raises(InvalidArgumentError):
        stats.FeatureStats(min=2, max=1)
