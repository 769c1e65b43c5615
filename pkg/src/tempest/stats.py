"""The adversary's knowledge: per-feature summary statistics and categorical value pools.

Statistics are either computed from the public pool of a split or read from a
hand-curated YAML file. A statistic set to ``None`` is *unavailable*; query
generation and the adversary's scaler fall back when they meet one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import CATEGORICAL, NUMERIC, TabularDataset, validate_schema
from .errors import InvalidArgumentError, MissingClassError, MissingFileError, SchemaMismatchError

STATISTICS = ("mean", "variance", "min", "max")


@dataclass(frozen=True)
class FeatureStats:
    mean: float | None = None
    variance: float | None = None
    min: float | None = None
    max: float | None = None

    def __post_init__(self):
        for name in STATISTICS:
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, float(v))
        if self.variance is not None and self.variance < 0:
            raise InvalidArgumentError("variance must be nonnegative")
        if self.min is not None and self.max is not None and self.min > self.max:
            raise InvalidArgumentError(f"min {self.min} exceeds max {self.max}")

    @property
    def available(self) -> dict:
        return {name: getattr(self, name) is not None for name in STATISTICS}

    def has(self, *names) -> bool:
        return all(getattr(self, n) is not None for n in names)

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in STATISTICS if getattr(self, n) is not None}


@dataclass(frozen=True, eq=False)
class PublicStats:
    """Per-feature statistics for one population (pooled, or one class).

    ``pools`` maps each categorical feature to ``{value: count}`` in schema
    category order, i.e. the multiset of observed values. ``per_class`` maps
    class indices to a nested :class:`PublicStats` for that class alone.
    """

    schema: tuple
    features: dict
    pools: dict = field(default_factory=dict)
    per_class: dict | None = None

    def __post_init__(self):
        names = {f.name for f in self.schema}
        numeric = {f.name for f in self.schema if f.kind == NUMERIC}
        categorical = {f.name for f in self.schema if f.kind == CATEGORICAL}
        for name in list(self.features) + list(self.pools):
            if name not in names:
                raise SchemaMismatchError(f"statistics name unknown feature {name!r}")
        if not set(self.features) <= numeric:
            raise SchemaMismatchError("numeric statistics given for a categorical feature")
        if not set(self.pools) <= categorical:
            raise SchemaMismatchError("value pool given for a numeric feature")
        if self.per_class is not None:
            for key in self.per_class:
                if not isinstance(key, (int, np.integer)) or key < 0:
                    raise SchemaMismatchError(f"per-class key {key!r} is not a class index")

    def feature(self, name) -> FeatureStats:
        """Statistics of ``name``; an all-unavailable record if the feature is not listed."""
        return self.features.get(name, FeatureStats())

    def pool(self, name) -> dict:
        return self.pools.get(name, {})

    def for_class(self, c: int) -> "PublicStats":
        if not self.per_class or c not in self.per_class:
            raise MissingClassError(c)
        return self.per_class[c]

    def to_dict(self) -> dict:
        out = {
            "features": {k: v.to_dict() for k, v in self.features.items()},
            "pools": {k: dict(v) for k, v in self.pools.items()},
        }
        if self.per_class is not None:
            out["per_class"] = {int(c): {"features": s.to_dict()["features"],
                                         "pools": s.to_dict()["pools"]}
                                for c, s in sorted(self.per_class.items())}
        return out


def _column_stats(col: np.ndarray) -> FeatureStats:
    lo, hi = float(col.min()), float(col.max())
    mean = float(col.mean())
    # rounding can push the mean of a near-constant column just past an extreme
    mean = min(max(mean, lo), hi)
    variance = float(np.mean((col - mean) ** 2))
    return FeatureStats(mean=mean, variance=variance, min=lo, max=hi)


def _population_stats(pool: TabularDataset) -> PublicStats:
    num = [f for f in pool.schema if f.kind == NUMERIC]
    cat = [f for f in pool.schema if f.kind == CATEGORICAL]
    features = {f.name: _column_stats(pool.numeric[:, j]) for j, f in enumerate(num)}
    pools = {}
    for j, f in enumerate(cat):
        values, counts = np.unique(pool.categorical[:, j].astype(str), return_counts=True)
        tally = dict(zip(values.tolist(), counts.tolist()))
        pools[f.name] = {v: int(tally[v]) for v in f.categories if v in tally}
    return PublicStats(schema=tuple(pool.schema), features=features, pools=pools)


def compute_stats(pool: TabularDataset, per_class: bool = False) -> PublicStats:
    """Population mean/variance/min/max per numeric feature plus categorical pools."""
    if len(pool) == 0:
        raise InvalidArgumentError("cannot compute statistics of an empty pool")
    pooled = _population_stats(pool)
    if not per_class:
        return pooled
    overlay = {}
    for c in range(pool.n_classes):
        idx = np.flatnonzero(pool.labels == c)
        if idx.size == 0:
            raise MissingClassError(c)
        overlay[c] = _population_stats(pool.subset(idx))
    return PublicStats(schema=pooled.schema, features=pooled.features, pools=pooled.pools,
                       per_class=overlay)


def _parse_section(doc, schema, where) -> tuple:
    doc = doc or {}
    names = {f.name: f for f in schema}
    features, pools = {}, {}
    for name, entry in (doc.get("features") or {}).items():
        if name not in names:
            raise SchemaMismatchError(f"{where}: unknown feature {name!r}")
        if names[name].kind != NUMERIC:
            raise SchemaMismatchError(f"{where}: feature {name!r} is categorical")
        entry = entry or {}
        unknown = set(entry) - set(STATISTICS)
        if unknown:
            raise SchemaMismatchError(f"{where}: unknown statistics {sorted(unknown)} for {name!r}")
        features[name] = FeatureStats(**{k: entry[k] for k in entry})
    for name, entry in (doc.get("pools") or {}).items():
        if name not in names:
            raise SchemaMismatchError(f"{where}: unknown feature {name!r}")
        if names[name].kind != CATEGORICAL:
            raise SchemaMismatchError(f"{where}: feature {name!r} is numeric")
        if isinstance(entry, dict):
            pools[name] = {str(k): int(v) for k, v in entry.items()}
        else:
            tally = {}
            for v in entry or []:
                tally[str(v)] = tally.get(str(v), 0) + 1
            pools[name] = tally
    return features, pools


def load_stats_file(path, schema) -> PublicStats:
    """Read a statistics file.

    Layout (YAML or JSON)::

        features:
          Glucose: {mean: 141.3, variance: 1020.0}   # any subset of mean/variance/min/max
        pools:
          workclass: {Private: 120, Self-emp: 14}    # counts, or a plain list of values
        per_class:
          1:
            features: {...}
            pools: {...}

    Features not listed are unavailable.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"statistics file not found: {path}")
    schema = validate_schema(schema, require_categories=False)
    doc = yaml.safe_load(path.read_text()) or {}
    if not isinstance(doc, dict):
        raise SchemaMismatchError(f"{path}: top level must be a mapping")
    features, pools = _parse_section(doc, schema, str(path))
    per_class = None
    if doc.get("per_class"):
        per_class = {}
        for key, section in doc["per_class"].items():
            try:
                c = int(key)
            except (TypeError, ValueError):
                raise SchemaMismatchError(f"{path}: per-class key {key!r} is not a class index") from None
            f_c, p_c = _parse_section(section, schema, f"{path}[class {c}]")
            per_class[c] = PublicStats(schema=schema, features=f_c, pools=p_c)
    return PublicStats(schema=schema, features=features, pools=pools, per_class=per_class)


def dump_stats_file(stats: PublicStats, path) -> None:
    Path(path).write_text(yaml.safe_dump(stats.to_dict(), sort_keys=False))
