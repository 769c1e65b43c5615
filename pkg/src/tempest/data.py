"""Tabular schemas, CSV ingestion, one-hot encoding and the 1:3:1 split."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import (
    AllRowsDroppedError,
    HeaderMismatchError,
    InvalidArgumentError,
    MissingFileError,
    SchemaMismatchError,
    UnknownCategoryError,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

MISSING_MARKERS = frozenset({"", "?", "na", "n/a", "nan", "null", "none"})

SPLIT_PARTS = ("victim_train", "validation", "public_pool")
SPLIT_RATIO = (1, 3, 1)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = NUMERIC
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise InvalidArgumentError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == NUMERIC and self.categories:
            raise InvalidArgumentError(f"numeric feature {self.name!r} cannot list categories")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.categories:
            out["categories"] = list(self.categories)
        return out


def validate_schema(schema: Sequence[FeatureSpec], require_categories: bool = True) -> tuple:
    schema = tuple(schema)
    names = [f.name for f in schema]
    if len(set(names)) != len(names):
        raise SchemaMismatchError("feature names must be unique within a schema")
    if require_categories:
        for f in schema:
            if f.kind == CATEGORICAL and not f.categories:
                raise SchemaMismatchError(f"categorical feature {f.name!r} has no categories")
    return schema


def numeric_names(schema) -> list:
    return [f.name for f in schema if f.kind == NUMERIC]


def categorical_names(schema) -> list:
    return [f.name for f in schema if f.kind == CATEGORICAL]


def schema_to_dicts(schema) -> list:
    return [f.to_dict() for f in schema]


def schema_from_dicts(items) -> tuple:
    return tuple(
        FeatureSpec(name=str(d["name"]), kind=d.get("kind", NUMERIC),
                    categories=tuple(d.get("categories") or ()))
        for d in items
    )


@dataclass(frozen=True)
class DatasetSchema:
    """What a schema config file declares: features, label column, optional class order."""

    features: tuple
    label_column: str
    class_names: tuple | None = None


def load_schema(path) -> DatasetSchema:
    """Read a YAML/JSON schema config.

    Keys: ``label`` (column name), optional ``classes`` (explicit class order),
    ``features``: list of ``{name, kind: numeric|categorical, categories?}``.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"schema file not found: {path}")
    doc = yaml.safe_load(path.read_text()) or {}
    try:
        features = schema_from_dicts(doc["features"])
        label = str(doc["label"])
    except (KeyError, TypeError) as exc:
        raise SchemaMismatchError(f"schema file {path} lacks required key: {exc}") from exc
    classes = doc.get("classes")
    return DatasetSchema(
        features=validate_schema(features, require_categories=False),
        label_column=label,
        class_names=tuple(str(c) for c in classes) if classes else None,
    )


def dump_schema(schema: DatasetSchema, path) -> None:
    doc = {"label": schema.label_column, "features": schema_to_dicts(schema.features)}
    if schema.class_names:
        doc["classes"] = list(schema.class_names)
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Rows split column-wise into a float block and a string block.

    ``numeric`` holds the numeric features in schema order, ``categorical``
    the categorical ones (as ``str`` objects). ``row_ids`` are the row positions
    in the source file and serve as row identity across splits.
    """

    schema: tuple
    numeric: np.ndarray
    categorical: np.ndarray
    labels: np.ndarray
    class_names: tuple
    row_ids: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        n = len(self.labels)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n))
        n_num = len(numeric_names(self.schema))
        n_cat = len(categorical_names(self.schema))
        if self.numeric.shape != (n, n_num) or self.categorical.shape != (n, n_cat):
            raise SchemaMismatchError("row blocks do not match schema arity")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise InvalidArgumentError("label index outside class_names")
        if not np.all(np.isfinite(self.numeric)):
            raise InvalidArgumentError("numeric cells must be finite")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, index) -> "TabularDataset":
        index = np.asarray(index, dtype=int)
        return replace(self, numeric=self.numeric[index], categorical=self.categorical[index],
                       labels=self.labels[index], row_ids=self.row_ids[index], dropped=0)

    def records(self) -> list:
        return rows_to_records(self.schema, self.numeric, self.categorical)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def rows_to_records(schema, numeric, categorical) -> list:
    """Interleave the two column blocks back into schema-ordered records."""
    out = []
    for i in range(numeric.shape[0]):
        ni = ci = 0
        rec = []
        for f in schema:
            if f.kind == NUMERIC:
                rec.append(float(numeric[i, ni]))
                ni += 1
            else:
                rec.append(str(categorical[i, ci]))
                ci += 1
        out.append(rec)
    return out


def records_to_rows(schema, records):
    """Inverse of :func:`rows_to_records`; validates arity and cell kinds."""
    n_num = len(numeric_names(schema))
    n_cat = len(categorical_names(schema))
    numeric = np.empty((len(records), n_num), dtype=np.float64)
    categorical = np.empty((len(records), n_cat), dtype=object)
    for i, rec in enumerate(records):
        if not isinstance(rec, (list, tuple)) or len(rec) != len(schema):
            raise SchemaMismatchError(
                f"row {i}: expected {len(schema)} cells, got "
                f"{len(rec) if isinstance(rec, (list, tuple)) else type(rec).__name__}"
            )
        ni = ci = 0
        for f, cell in zip(schema, rec):
            if f.kind == NUMERIC:
                if isinstance(cell, bool) or not isinstance(cell, (int, float)):
                    raise SchemaMismatchError(f"row {i}: feature {f.name!r} must be a number")
                numeric[i, ni] = cell
                ni += 1
            else:
                categorical[i, ci] = str(cell)
                ci += 1
    if not np.all(np.isfinite(numeric)):
        raise SchemaMismatchError("numeric cells must be finite")
    return numeric, categorical


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_MARKERS


def load_csv(path, schema: Sequence[FeatureSpec], label_column: str,
             class_names: Sequence[str] | None = None) -> TabularDataset:
    """Parse a headered CSV into a :class:`TabularDataset`.

    Rows with a missing or unparseable cell (including a category outside an
    explicit category list, or a label outside ``class_names``) are dropped and
    counted in ``dataset.dropped``. Categories and classes not given explicitly
    are ordered by first appearance among retained rows.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"dataset file not found: {path}")
    schema = validate_schema(schema, require_categories=False)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        header = next(reader, None)
        if header is None:
            raise HeaderMismatchError(f"{path} has no header row")
        header = [h.strip() for h in header]
        wanted = [f.name for f in schema] + [label_column]
        missing = [w for w in wanted if w not in header]
        if missing:
            raise HeaderMismatchError(f"{path}: header lacks columns {missing}")
        cols = [header.index(w) for w in wanted]
        raw = []
        dropped = 0
        for line in reader:
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                dropped += 1
                continue
            raw.append([line[c].strip() for c in cols])

    fixed_classes = list(class_names) if class_names else None
    cat_order = {f.name: list(f.categories) for f in schema if f.kind == CATEGORICAL}
    explicit = {f.name for f in schema if f.kind == CATEGORICAL and f.categories}
    num_rows, cat_rows, labels = [], [], []
    seen_classes = [] if fixed_classes is None else fixed_classes
    for cells in raw:
        ok = True
        nums, cats = [], []
        for f, cell in zip(schema, cells):
            if _is_missing(cell):
                ok = False
                break
            if f.kind == NUMERIC:
                try:
                    v = float(cell)
                except ValueError:
                    ok = False
                    break
                if not math.isfinite(v):
                    ok = False
                    break
                nums.append(v)
            else:
                if f.name in explicit and cell not in cat_order[f.name]:
                    ok = False
                    break
                cats.append(cell)
        label = cells[-1]
        if ok and (_is_missing(label) or (fixed_classes is not None and label not in fixed_classes)):
            ok = False
        if not ok:
            dropped += 1
            continue
        for f, cell in zip([f for f in schema if f.kind == CATEGORICAL], cats):
            if cell not in cat_order[f.name]:
                cat_order[f.name].append(cell)
        if fixed_classes is None and label not in seen_classes:
            seen_classes.append(label)
        num_rows.append(nums)
        cat_rows.append(cats)
        labels.append(seen_classes.index(label))
    if not labels:
        raise AllRowsDroppedError(f"{path}: no usable rows ({dropped} dropped)")

    frozen = tuple(
        replace(f, categories=tuple(cat_order[f.name])) if f.kind == CATEGORICAL else f
        for f in schema
    )
    n_num = len(numeric_names(frozen))
    n_cat = len(categorical_names(frozen))
    return TabularDataset(
        schema=frozen,
        numeric=np.asarray(num_rows, dtype=np.float64).reshape(len(labels), n_num),
        categorical=np.asarray(cat_rows, dtype=object).reshape(len(labels), n_cat),
        labels=np.asarray(labels, dtype=int),
        class_names=tuple(seen_classes),
        dropped=dropped,
    )


def write_csv(dataset: TabularDataset, path, label_column: str = "label") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f.name for f in dataset.schema] + [label_column])
        for rec, y in zip(dataset.records(), dataset.labels):
            w.writerow([repr(c) if isinstance(c, float) else c for c in rec]
                       + [dataset.class_names[y]])


@dataclass(frozen=True)
class SplitResult:
    victim_train: TabularDataset
    validation: TabularDataset
    public_pool: TabularDataset

    def parts(self):
        return dict(zip(SPLIT_PARTS, (self.victim_train, self.validation, self.public_pool)))


def _apportion(n: int, ratio=SPLIT_RATIO) -> list:
    """Largest-remainder apportionment of ``n`` rows; ties go to the earlier part."""
    total = sum(ratio)
    exact = [n * r / total for r in ratio]
    sizes = [math.floor(e) for e in exact]
    order = sorted(range(len(ratio)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(dataset: TabularDataset, seed: int) -> SplitResult:
    """Seeded, class-stratified 1:3:1 split into victim-train / validation / public pool."""
    if len(dataset) < sum(SPLIT_RATIO):
        raise InvalidArgumentError(f"need at least {sum(SPLIT_RATIO)} rows to split, got {len(dataset)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    parts = [[], [], []]
    for c in range(dataset.n_classes):
        members = order[dataset.labels[order] == c]
        start = 0
        for part, size in zip(parts, _apportion(len(members))):
            part.extend(members[start:start + size])
            start += size
    # keep the shuffled order inside each part
    rank = np.empty(len(dataset), dtype=int)
    rank[order] = np.arange(len(dataset))
    subsets = [dataset.subset(sorted(p, key=lambda i: rank[i])) for p in parts]
    return SplitResult(*subsets)


@dataclass(frozen=True)
class EncodedColumn:
    feature: str
    kind: str
    start: int
    stop: int
    categories: tuple = ()


@dataclass(frozen=True)
class EncodingMap:
    """Column provenance of the encoded matrix: numeric features pass through,
    categorical features become one-hot blocks in schema category order."""

    columns: tuple
    width: int

    @classmethod
    def from_schema(cls, schema) -> "EncodingMap":
        schema = validate_schema(schema)
        cols, pos = [], 0
        for f in schema:
            w = 1 if f.kind == NUMERIC else len(f.categories)
            cols.append(EncodedColumn(f.name, f.kind, pos, pos + w, f.categories))
            pos += w
        return cls(tuple(cols), pos)

    @property
    def numeric_mask(self) -> np.ndarray:
        mask = np.zeros(self.width, dtype=bool)
        for c in self.columns:
            if c.kind == NUMERIC:
                mask[c.start] = True
        return mask

    def numeric_columns(self) -> list:
        return [c.start for c in self.columns if c.kind == NUMERIC]

    def encode(self, numeric, categorical) -> np.ndarray:
        numeric = np.asarray(numeric, dtype=np.float64)
        n = numeric.shape[0]
        out = np.zeros((n, self.width), dtype=np.float64)
        ni = ci = 0
        for col in self.columns:
            if col.kind == NUMERIC:
                out[:, col.start] = numeric[:, ni]
                ni += 1
                continue
            lookup = {v: i for i, v in enumerate(col.categories)}
            for r in range(n):
                value = categorical[r, ci]
                try:
                    out[r, col.start + lookup[value]] = 1.0
                except KeyError:
                    raise UnknownCategoryError(col.feature, value) from None
            ci += 1
        return out

    def decode(self, matrix):
        """Map encoded rows back to raw blocks; categorical blocks decode by argmax."""
        matrix = np.asarray(matrix, dtype=np.float64)
        n = matrix.shape[0]
        num_cols = [c for c in self.columns if c.kind == NUMERIC]
        cat_cols = [c for c in self.columns if c.kind == CATEGORICAL]
        numeric = np.empty((n, len(num_cols)), dtype=np.float64)
        categorical = np.empty((n, len(cat_cols)), dtype=object)
        for j, c in enumerate(num_cols):
            numeric[:, j] = matrix[:, c.start]
        for j, c in enumerate(cat_cols):
            pick = np.argmax(matrix[:, c.start:c.stop], axis=1)
            categorical[:, j] = np.asarray(c.categories, dtype=object)[pick]
        return numeric, categorical

    def to_dicts(self) -> list:
        return [{"feature": c.feature, "kind": c.kind, "start": c.start, "stop": c.stop}
                for c in self.columns]


def encode(dataset: TabularDataset):
    """Return ``(matrix, encoding_map)`` for a dataset."""
    enc = EncodingMap.from_schema(dataset.schema)
    return enc.encode(dataset.numeric, dataset.categorical), enc
