"""Local copies of the four benchmark datasets.

Each dataset is materialized once as ``<name>.csv`` plus ``<name>.schema.yaml``
under the cache directory (``$TEMPEST_DATA_DIR``, default
``~/.cache/tempest``). Sources are tried in order: a copy bundled with an
installed package, then the public download URL.
"""
from __future__ import annotations

import csv
import importlib.util
import io
import logging
import os
import shutil
import urllib.request
from pathlib import Path

from .data import CATEGORICAL, NUMERIC, DatasetSchema, FeatureSpec, dump_schema, load_csv, load_schema
from .errors import MissingFileError

log = logging.getLogger(__name__)

DATA_DIR_ENV = "TEMPEST_DATA_DIR"

ADULT_COLUMNS = [
    ("age", NUMERIC), ("workclass", CATEGORICAL), ("fnlwgt", NUMERIC),
    ("education", CATEGORICAL), ("education-num", NUMERIC), ("marital-status", CATEGORICAL),
    ("occupation", CATEGORICAL), ("relationship", CATEGORICAL), ("race", CATEGORICAL),
    ("sex", CATEGORICAL), ("capital-gain", NUMERIC), ("capital-loss", NUMERIC),
    ("hours-per-week", NUMERIC), ("native-country", CATEGORICAL),
]
DIABETES_COLUMNS = ["Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin",
                    "BMI", "DiabetesPedigreeFunction", "Age"]

URLS = {
    "adult": "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
    "diabetes": "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.data.csv",
    "arrhythmia": "https://archive.ics.uci.edu/ml/machine-learning-databases/arrhythmia/arrhythmia.data",
}

# arrhythmia column 14 ("J" angle) is missing in most rows; it is dropped so
# that row-dropping on missing cells keeps the dataset usable
ARRHYTHMIA_DROPPED = (13,)


def data_dir(cache_dir=None) -> Path:
    root = Path(cache_dir or os.environ.get(DATA_DIR_ENV) or Path.home() / ".cache" / "tempest")
    root.mkdir(parents=True, exist_ok=True)
    return root


def _package_file(package, relative):
    spec = importlib.util.find_spec(package)
    if spec is None or not spec.submodule_search_locations:
        return None
    path = Path(list(spec.submodule_search_locations)[0]) / relative
    return path if path.exists() else None


def _download(url) -> str:
    log.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8", errors="replace")


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _adult(target):
    src = _package_file("mglearn", "data/adult.data")
    text = src.read_text() if src else _download(URLS["adult"])
    rows = [[c.strip() for c in r] for r in csv.reader(io.StringIO(text)) if len(r) == 15]
    _write(target, [n for n, _ in ADULT_COLUMNS] + ["income"], rows)
    return DatasetSchema(tuple(FeatureSpec(n, k) for n, k in ADULT_COLUMNS), "income",
                         ("<=50K", ">50K"))


def _cancer(target):
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    names = [n.replace(" ", "_") for n in bunch.feature_names]
    rows = [[repr(float(v)) for v in x] + [bunch.target_names[y]]
            for x, y in zip(bunch.data, bunch.target)]
    _write(target, names + ["diagnosis"], rows)
    return DatasetSchema(tuple(FeatureSpec(n) for n in names), "diagnosis",
                         tuple(str(t) for t in bunch.target_names))


def _diabetes(target):
    src = _package_file("keel_ds", "data/balanced/raw/pima.dat")
    if src:
        rows = []
        for line in src.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            *cells, label = [c.strip() for c in line.split(",")]
            rows.append(cells + ["1" if label == "tested_positive" else "0"])
    else:
        rows = [r for r in csv.reader(io.StringIO(_download(URLS["diabetes"]))) if len(r) == 9]
    _write(target, DIABETES_COLUMNS + ["Outcome"], rows)
    return DatasetSchema(tuple(FeatureSpec(n) for n in DIABETES_COLUMNS), "Outcome", ("0", "1"))


def _arrhythmia(target):
    text = _download(URLS["arrhythmia"])
    names = [f"f{i + 1:03d}" for i in range(279)]
    keep = [i for i in range(279) if i not in ARRHYTHMIA_DROPPED]
    rows = []
    for r in csv.reader(io.StringIO(text)):
        if len(r) != 280:
            continue
        rows.append([r[i] for i in keep] + [r[279].strip()])
    _write(target, [names[i] for i in keep] + ["class"], rows)
    return DatasetSchema(tuple(FeatureSpec(names[i]) for i in keep), "class",
                         tuple(str(c) for c in range(1, 17)))


FETCHERS = {"adult": _adult, "cancer": _cancer, "diabetes": _diabetes, "arrhythmia": _arrhythmia}


def fetch(name: str, cache_dir=None, refresh: bool = False):
    """Materialize dataset ``name``; returns ``(csv_path, schema_path)``."""
    if name not in FETCHERS:
        raise KeyError(f"unknown dataset {name!r}; known: {sorted(FETCHERS)}")
    root = data_dir(cache_dir)
    csv_path, schema_path = root / f"{name}.csv", root / f"{name}.schema.yaml"
    if refresh or not (csv_path.exists() and schema_path.exists()):
        tmp = csv_path.with_suffix(".tmp")
        try:
            schema = FETCHERS[name](tmp)
        except Exception as exc:
            tmp.unlink(missing_ok=True)
            raise MissingFileError(f"dataset {name!r} unavailable: {exc}") from exc
        shutil.move(tmp, csv_path)
        dump_schema(schema, schema_path)
    return csv_path, schema_path


def load(name: str, cache_dir=None):
    csv_path, schema_path = fetch(name, cache_dir)
    schema = load_schema(schema_path)
    return load_csv(csv_path, schema.features, schema.label_column, schema.class_names)


def resource_path(name: str) -> Path:
    """Path of a statistics file shipped with the package."""
    return Path(__file__).parent / "resources" / name
