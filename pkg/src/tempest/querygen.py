"""Query synthesis: statistics-driven generators plus the baseline generators.

* ``genvar``   -- each numeric feature drawn independently from Normal(mean, variance)
* ``genmin``   -- each numeric feature drawn uniformly on [min, max]
* ``datafree`` -- every encoded column uniform on [0, 1], flagged as already normalized

Numeric features whose statistics are unavailable fall back to Uniform[0, 1]
(in raw units). Categorical cells are drawn from the public value pool with
its empirical frequencies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .data import CATEGORICAL, NUMERIC, EncodingMap, TabularDataset, rows_to_records
from .errors import (
    ClassShortfallError,
    EmptyPoolError,
    InvalidArgumentError,
    MissingClassError,
    SchemaMismatchError,
    UnavailableStatisticError,
)
from .scaling import Scaler, inverse_transform, transform

GEN_VAR = "genvar"
GEN_MIN = "genmin"
DATA_FREE = "datafree"
GEN_KINDS = (GEN_VAR, GEN_MIN, DATA_FREE)

GENERATED = "generated"
INITIAL = "initial-sample"
AUGMENTED = "augmented"

# guards ceil() against products such as 0.1 * 30 = 3.0000000000000004
_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class GenMode:
    kind: str
    per_class: bool = False
    seed: int = 0
    fallback: bool = True

    def __post_init__(self):
        kind = str(self.kind).lower().replace("_", "").replace("-", "")
        if kind not in GEN_KINDS:
            raise InvalidArgumentError(f"unknown generation mode {self.kind!r}")
        object.__setattr__(self, "kind", kind)


@dataclass(frozen=True, eq=False)
class QueryBatch:
    """Raw-scale query rows plus a provenance tag per row.

    ``prenormalized`` is set only for data-free batches: the encoded matrix the
    adversary believes is already in the victim's normalized space. The raw
    blocks then hold its decoding, so the batch can still be sent as records.
    """

    schema: tuple
    numeric: np.ndarray
    categorical: np.ndarray
    provenance: np.ndarray
    prenormalized: np.ndarray | None = None

    def __post_init__(self):
        n = self.numeric.shape[0]
        if self.categorical.shape[0] != n or len(self.provenance) != n:
            raise InvalidArgumentError("query batch blocks differ in length")
        if not np.all(np.isfinite(self.numeric)):
            raise InvalidArgumentError("query batch holds non-finite numeric cells")

    def __len__(self) -> int:
        return self.numeric.shape[0]

    @property
    def is_prenormalized(self) -> bool:
        return self.prenormalized is not None

    def records(self) -> list:
        return rows_to_records(self.schema, self.numeric, self.categorical)

    def encoded(self) -> np.ndarray:
        return EncodingMap.from_schema(self.schema).encode(self.numeric, self.categorical)

    def subset(self, index) -> "QueryBatch":
        index = np.asarray(index, dtype=int)
        return replace(
            self, numeric=self.numeric[index], categorical=self.categorical[index],
            provenance=self.provenance[index],
            prenormalized=None if self.prenormalized is None else self.prenormalized[index],
        )

    def counts(self) -> dict:
        tags, n = np.unique(self.provenance, return_counts=True)
        return dict(zip(tags.tolist(), n.tolist()))


def concat(batches) -> QueryBatch:
    batches = list(batches)
    if not batches:
        raise InvalidArgumentError("nothing to concatenate")
    pre = [b.is_prenormalized for b in batches]
    if any(pre) and not all(pre):
        raise InvalidArgumentError("cannot mix pre-normalized and raw batches")
    return QueryBatch(
        schema=batches[0].schema,
        numeric=np.concatenate([b.numeric for b in batches]),
        categorical=np.concatenate([b.categorical for b in batches]),
        provenance=np.concatenate([b.provenance for b in batches]),
        prenormalized=np.concatenate([b.prenormalized for b in batches]) if all(pre) else None,
    )


def batch_from_dataset(dataset: TabularDataset, tag: str = INITIAL) -> QueryBatch:
    return QueryBatch(dataset.schema, dataset.numeric.copy(), dataset.categorical.copy(),
                      np.full(len(dataset), tag, dtype=object))


def _draw_numeric(fs, kind, n, rng, name, fallback):
    if kind == GEN_VAR:
        if fs.has("mean", "variance"):
            return rng.normal(fs.mean, math.sqrt(fs.variance), size=n)
        needed = ("mean", "variance")
    else:
        if fs.has("min", "max"):
            return rng.uniform(fs.min, fs.max, size=n)
        needed = ("min", "max")
    if not fallback:
        raise UnavailableStatisticError(name, next(s for s in needed if getattr(fs, s) is None))
    return rng.uniform(0.0, 1.0, size=n)


def _draw_population(stats, pooled, kind, n, schema, rng, fallback):
    numeric = np.empty((n, sum(f.kind == NUMERIC for f in schema)))
    categorical = np.empty((n, sum(f.kind == CATEGORICAL for f in schema)), dtype=object)
    ni = ci = 0
    for f in schema:
        if f.kind == NUMERIC:
            numeric[:, ni] = _draw_numeric(stats.feature(f.name), kind, n, rng, f.name, fallback)
            ni += 1
            continue
        pool = stats.pool(f.name) or pooled.pool(f.name)
        total = sum(pool.values())
        if total == 0:
            raise EmptyPoolError(f.name)
        values = np.asarray(list(pool), dtype=object)
        counts = np.asarray(list(pool.values()), dtype=np.float64)
        categorical[:, ci] = rng.choice(values, size=n, p=counts / total)
        ci += 1
    return numeric, categorical


def per_class_counts(n: int, classes) -> dict:
    """ceil(n / |C|) rows per class, trimmed back to ``n`` from the largest class
    (ties: highest class index first)."""
    classes = sorted(classes)
    each = math.ceil(n / len(classes))
    counts = {c: each for c in classes}
    for _ in range(each * len(classes) - n):
        victim = max(classes, key=lambda c: (counts[c], c))
        counts[victim] -= 1
    return counts


def generate(stats, mode: GenMode, n: int, schema=None) -> QueryBatch:
    """Draw ``n`` raw query rows according to ``mode``; deterministic per ``mode.seed``.

    ``stats`` may be ``None`` for the data-free mode, which needs only the schema.
    """
    if n < 1:
        raise InvalidArgumentError("need n >= 1 queries")
    if schema is None:
        if stats is None:
            raise InvalidArgumentError("a schema is required when no statistics are given")
        schema = stats.schema
    schema = tuple(schema)
    if stats is not None and [f.name for f in stats.schema] != [f.name for f in schema]:
        raise SchemaMismatchError("statistics were computed for a different schema")
    rng = np.random.default_rng(mode.seed)
    tags = np.full(n, GENERATED, dtype=object)

    if mode.kind == DATA_FREE:
        enc = EncodingMap.from_schema(schema)
        matrix = rng.uniform(0.0, 1.0, size=(n, enc.width))
        numeric, categorical = enc.decode(matrix)
        return QueryBatch(schema, numeric, categorical, tags, prenormalized=matrix)

    if stats is None:
        raise InvalidArgumentError(f"mode {mode.kind!r} needs public statistics")
    if not mode.per_class:
        numeric, categorical = _draw_population(stats, stats, mode.kind, n, schema, rng,
                                                mode.fallback)
        return QueryBatch(schema, numeric, categorical, tags)

    if not stats.per_class:
        raise MissingClassError(0)
    blocks = []
    for c, k in per_class_counts(n, stats.per_class).items():
        if k == 0:
            continue
        numeric, categorical = _draw_population(stats.for_class(c), stats, mode.kind, k,
                                                schema, rng, mode.fallback)
        blocks.append(QueryBatch(schema, numeric, categorical, np.full(k, GENERATED, dtype=object)))
    return concat(blocks)


def initial_quota(k: int, classes) -> dict:
    """Split ``k`` initial rows as evenly as possible over ``classes`` (lower indices first)."""
    classes = sorted(classes)
    base, extra = divmod(k, len(classes))
    return {c: base + (i < extra) for i, c in enumerate(classes)}


def sample_initial(initial: TabularDataset, k: int, rng) -> TabularDataset:
    """Class-balanced draw of ``k`` genuine rows without replacement."""
    present = np.flatnonzero(initial.class_counts() > 0).tolist()
    if not present:
        raise InvalidArgumentError("initial sample set is empty")
    picks = []
    for c, need in initial_quota(k, present).items():
        members = np.flatnonzero(initial.labels == c)
        if need > members.size:
            raise ClassShortfallError(c, need, members.size)
        picks.extend(rng.choice(members, size=need, replace=False).tolist())
    return initial.subset(picks)


def mix_with_initial_samples(generated: QueryBatch, initial: TabularDataset, fraction: float,
                             seed: int = 0, budget: int | None = None) -> QueryBatch:
    """Replace part of a generated batch by genuine rows.

    The output has ``budget`` rows (default: ``len(generated)``), of which
    ``ceil(fraction * budget)`` are class-balanced initial samples and the rest
    the leading rows of ``generated``.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidArgumentError("fraction must lie strictly between 0 and 1")
    if generated.is_prenormalized:
        raise InvalidArgumentError("initial samples cannot be mixed into a pre-normalized batch")
    budget = len(generated) if budget is None else budget
    k = math.ceil(fraction * budget - _CEIL_SLACK)
    if budget - k > len(generated):
        raise InvalidArgumentError("generated batch is smaller than the generated share")
    rng = np.random.default_rng(seed)
    chosen = sample_initial(initial, k, rng)
    return concat([batch_from_dataset(chosen, INITIAL), generated.subset(np.arange(budget - k))])


def jacobian_step(model: nn.MlpModel, Z, lam: float) -> np.ndarray:
    """``Z + lam * sign(dL/dZ)`` with L the cross-entropy against the model's own argmax.

    Coordinates with zero gradient stay put (sign(0) = 0).
    """
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    Z = np.asarray(Z, dtype=np.float64)
    labels = nn.predict(model, Z)
    return Z + lam * np.sign(nn.input_gradient(model, Z, labels))


def jacobian_augment(substitute: nn.MlpModel, seeds: QueryBatch, scaler: Scaler,
                     lam: float = 0.1) -> QueryBatch:
    """Double ``seeds`` with one signed-gradient step per row, taken in the
    adversary's normalized space and mapped back to raw units."""
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    enc = EncodingMap.from_schema(seeds.schema)
    Z = transform(scaler, enc.encode(seeds.numeric, seeds.categorical))
    stepped = jacobian_step(substitute, Z, lam)
    raw = inverse_transform(scaler, stepped)
    numeric, categorical = enc.decode(raw)
    fresh = QueryBatch(seeds.schema, numeric, categorical,
                       np.full(len(seeds), AUGMENTED, dtype=object))
    return concat([seeds, fresh])
