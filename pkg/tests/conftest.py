import numpy as np
import pytest

from tempest.data import CATEGORICAL, NUMERIC, FeatureSpec, TabularDataset

MIXED_SCHEMA = (
    FeatureSpec("x1"),
    FeatureSpec("color", CATEGORICAL, ("red", "green", "blue")),
    FeatureSpec("x2"),
    FeatureSpec("size", CATEGORICAL, ("S", "L")),
)


def make_dataset(n=200, seed=0, n_classes=2, schema=MIXED_SCHEMA, shift=2.0):
    """Class-separable synthetic rows: class c centres numeric features at c * shift."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    n_num = sum(f.kind == NUMERIC for f in schema)
    cats = [f for f in schema if f.kind == CATEGORICAL]
    numeric = rng.normal(size=(n, n_num)) + shift * labels[:, None] + np.arange(n_num) * 10.0
    categorical = np.empty((n, len(cats)), dtype=object)
    for j, f in enumerate(cats):
        # class-dependent category preference
        pick = (labels + rng.integers(0, 2, size=n)) % len(f.categories)
        categorical[:, j] = np.asarray(f.categories, dtype=object)[pick]
    return TabularDataset(schema=tuple(schema), numeric=numeric, categorical=categorical,
                          labels=labels.astype(int),
                          class_names=tuple(f"c{i}" for i in range(n_classes)))


@pytest.fixture
def mixed():
    return make_dataset()


@pytest.fixture
def numeric_only():
    schema = (FeatureSpec("a"), FeatureSpec("b"), FeatureSpec("c"))
    return make_dataset(300, seed=1, schema=schema)
