import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempest import data
from tempest.data import CATEGORICAL, FeatureSpec
from tempest.errors import (
    AllRowsDroppedError,
    HeaderMismatchError,
    InvalidArgumentError,
    MissingFileError,
    SchemaMismatchError,
    UnknownCategoryError,
)

from conftest import make_dataset

SCHEMA = (FeatureSpec("age"), FeatureSpec("job", CATEGORICAL))


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_drops_malformed_row(tmp_path):
    p = write(tmp_path, "age,job,y\n30,clerk,no\nabc,chef,yes\n41,chef,yes\n")
    ds = data.load_csv(p, SCHEMA, "y")
    assert len(ds) == 2 and ds.dropped == 1
    assert ds.numeric[:, 0].tolist() == [30.0, 41.0]
    assert ds.categorical[:, 0].tolist() == ["clerk", "chef"]
    assert ds.class_names == ("no", "yes") and ds.labels.tolist() == [0, 1]
    assert ds.schema[1].categories == ("clerk", "chef")


def test_load_csv_missing_markers_and_extra_columns(tmp_path):
    p = write(tmp_path, "id,job,age,y\n1,?,3,a\n2,x,,b\n3,x,NaN,b\n4,x,5,b\n5,y,6,a\n")
    ds = data.load_csv(p, SCHEMA, "y")
    assert len(ds) == 2 and ds.dropped == 3
    assert ds.row_ids.tolist() == [0, 1]


def test_load_csv_explicit_class_order(tmp_path):
    p = write(tmp_path, "age,job,y\n1,a,yes\n2,b,no\n3,a,maybe\n")
    ds = data.load_csv(p, SCHEMA, "y", class_names=("no", "yes"))
    assert ds.class_names == ("no", "yes")
    assert ds.labels.tolist() == [1, 0] and ds.dropped == 1


def test_load_csv_errors(tmp_path):
    with pytest.raises(MissingFileError):
        data.load_csv(tmp_path / "absent.csv", SCHEMA, "y")
    with pytest.raises(HeaderMismatchError):
        data.load_csv(write(tmp_path, "age,y\n1,a\n"), SCHEMA, "y")
    with pytest.raises(HeaderMismatchError):
        data.load_csv(write(tmp_path, ""), SCHEMA, "y")
    with pytest.raises(AllRowsDroppedError):
        data.load_csv(write(tmp_path, "age,job,y\n"), SCHEMA, "y")
    assert issubclass(MissingFileError, FileNotFoundError)


def test_schema_validation():
    with pytest.raises(SchemaMismatchError):
        data.validate_schema([FeatureSpec("a"), FeatureSpec("a")])
    with pytest.raises(SchemaMismatchError):
        data.validate_schema([FeatureSpec("c", CATEGORICAL)])
    with pytest.raises(InvalidArgumentError):
        FeatureSpec("a", "ordinal")


def test_schema_file_round_trip(tmp_path):
    s = data.DatasetSchema((FeatureSpec("a"), FeatureSpec("b", CATEGORICAL, ("u", "v"))), "lab",
                           ("n", "p"))
    data.dump_schema(s, tmp_path / "s.yaml")
    assert data.load_schema(tmp_path / "s.yaml") == s


def test_csv_write_read_round_trip(tmp_path, mixed):
    data.write_csv(mixed, tmp_path / "m.csv", "label")
    back = data.load_csv(tmp_path / "m.csv", mixed.schema, "label", mixed.class_names)
    np.testing.assert_array_equal(back.numeric, mixed.numeric)
    np.testing.assert_array_equal(back.categorical, mixed.categorical)
    np.testing.assert_array_equal(back.labels, mixed.labels)


def test_records_round_trip_and_validation(mixed):
    recs = mixed.records()
    assert recs[0][1] in ("red", "green", "blue") and isinstance(recs[0][0], float)
    num, cat = data.records_to_rows(mixed.schema, recs)
    np.testing.assert_array_equal(num, mixed.numeric)
    with pytest.raises(SchemaMismatchError):
        data.records_to_rows(mixed.schema, [[1.0, "red", 2.0]])
    with pytest.raises(SchemaMismatchError):
        data.records_to_rows(mixed.schema, [["x", "red", 2.0, "S"]])


@pytest.mark.parametrize("n, expected", [(500, [100, 300, 100]), (268, [54, 161, 53]),
                                         (500 + 268, None), (5, [1, 3, 1]), (7, [2, 4, 1])])
def test_apportion(n, expected):
    sizes = data._apportion(n)
    assert sum(sizes) == n
    if expected is not None:
        assert sizes == expected


def test_split_balanced_500():
    ds = make_dataset(500, seed=2)
    parts = data.split(ds, seed=0)
    assert [len(p) for p in parts.parts().values()] == [100, 300, 100]


def test_split_diabetes_shaped_counts():
    # 500 negatives / 268 positives: largest remainder per class gives
    # 100/300/100 and 54/161/53, so 154/461/153 overall
    labels = np.array([0] * 500 + [1] * 268)
    ds = data.TabularDataset(schema=(FeatureSpec("a"),), numeric=np.arange(768.0)[:, None],
                             categorical=np.empty((768, 0), dtype=object), labels=labels,
                             class_names=("0", "1"))
    parts = data.split(ds, seed=3)
    assert [len(p) for p in parts.parts().values()] == [154, 461, 153]
    assert [p.class_counts().tolist() for p in parts.parts().values()] == [[100, 54], [300, 161],
                                                                          [100, 53]]


@settings(max_examples=40, deadline=None)
@given(n=st.integers(5, 300), k=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_split_partition_properties(n, k, seed):
    ds = make_dataset(n, seed=seed % 97, n_classes=k)
    a, b = data.split(ds, seed), data.split(ds, seed)
    ids = [p.row_ids for p in a.parts().values()]
    allids = np.concatenate(ids)
    assert sorted(allids.tolist()) == list(range(n))
    for x, y in zip(a.parts().values(), b.parts().values()):
        np.testing.assert_array_equal(x.row_ids, y.row_ids)
    counts = ds.class_counts()
    for part, r in zip(a.parts().values(), (1, 3, 1)):
        # within one row of the exact ratio for every class stratum
        assert np.all(np.abs(part.class_counts() - counts * r / 5) < 1 + 1e-9)


def test_split_too_small():
    with pytest.raises(InvalidArgumentError):
        data.split(make_dataset(4), 0)


def test_encode_one_hot_and_decode(mixed):
    X, enc = data.encode(mixed)
    assert enc.width == 1 + 3 + 1 + 2
    assert enc.numeric_mask.tolist() == [True, False, False, False, True, False, False]
    np.testing.assert_array_equal(X[:, 0], mixed.numeric[:, 0])
    np.testing.assert_array_equal(X[:, 4], mixed.numeric[:, 1])
    assert np.all(X[:, 1:4].sum(1) == 1) and np.all(X[:, 5:7].sum(1) == 1)
    first = mixed.categorical[0, 0]
    assert X[0, 1 + ("red", "green", "blue").index(first)] == 1.0
    num, cat = enc.decode(X)
    np.testing.assert_array_equal(num, mixed.numeric)
    np.testing.assert_array_equal(cat, mixed.categorical)


def test_encode_unknown_category(mixed):
    enc = data.EncodingMap.from_schema(mixed.schema)
    cat = mixed.categorical[:2].copy()
    cat[1, 1] = "XL"
    with pytest.raises(UnknownCategoryError) as info:
        enc.encode(mixed.numeric[:2], cat)
    assert info.value.feature == "size" and info.value.value == "XL"
