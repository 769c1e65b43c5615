"""Standard (z-score) and MinMax normalization over encoded matrices.

Parameters are stored per encoded column in raw feature units. One-hot columns
carry identity parameters (mean 0 / variance 1, or min 0 / max 1) so both
scalers leave them unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EncodingMap, NUMERIC
from .errors import InvalidArgumentError, UnavailableStatisticError

STANDARD = "standard"
MINMAX = "minmax"
KINDS = (STANDARD, MINMAX)


def _kind(kind: str) -> str:
    k = str(kind).lower().replace("-", "").replace("_", "")
    if k not in KINDS:
        raise InvalidArgumentError(f"unknown scaler kind {kind!r}")
    return k


@dataclass(frozen=True, eq=False)
class Scaler:
    """``a`` and ``b`` are (mean, variance) for Standard and (min, max) for MinMax."""

    kind: str
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kind", _kind(self.kind))
        a = np.asarray(self.a, dtype=np.float64).copy()
        b = np.asarray(self.b, dtype=np.float64).copy()
        if a.shape != b.shape or a.ndim != 1:
            raise InvalidArgumentError("scaler parameter vectors must be 1-D and equal length")
        if self.kind == STANDARD and np.any(b < 0):
            raise InvalidArgumentError("Standard scaler variance must be nonnegative")
        if self.kind == MINMAX and np.any(a > b):
            raise InvalidArgumentError("MinMax scaler needs min <= max per column")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def arity(self) -> int:
        return self.a.shape[0]

    @property
    def mean(self):
        return self.a if self.kind == STANDARD else None

    @property
    def variance(self):
        return self.b if self.kind == STANDARD else None

    @property
    def min(self):
        return self.a if self.kind == MINMAX else None

    @property
    def max(self):
        return self.b if self.kind == MINMAX else None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Scaler":
        return cls(d["kind"], d["a"], d["b"])

    def equals(self, other, atol=0.0) -> bool:
        return (self.kind == other.kind and self.arity == other.arity
                and np.allclose(self.a, other.a, rtol=0, atol=atol)
                and np.allclose(self.b, other.b, rtol=0, atol=atol))


def identity_scaler(kind: str, width: int) -> Scaler:
    if _kind(kind) == STANDARD:
        return Scaler(STANDARD, np.zeros(width), np.ones(width))
    return Scaler(MINMAX, np.zeros(width), np.ones(width))


def fit(kind: str, data, passthrough=None) -> Scaler:
    """Fit per-column parameters; columns flagged in ``passthrough`` get identity."""
    kind = _kind(kind)
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("fit needs a nonempty 2-D matrix")
    if kind == STANDARD:
        a = X.mean(axis=0)
        b = ((X - a) ** 2).mean(axis=0)
    else:
        a, b = X.min(axis=0), X.max(axis=0)
    if passthrough is not None:
        mask = np.asarray(passthrough, dtype=bool)
        ident = identity_scaler(kind, X.shape[1])
        a = np.where(mask, ident.a, a)
        b = np.where(mask, ident.b, b)
    return Scaler(kind, a, b)


def fit_encoded(kind: str, data, encoding: EncodingMap) -> Scaler:
    """:func:`fit` with every one-hot column left as identity."""
    return fit(kind, data, passthrough=~encoding.numeric_mask)


def fit_from_stats(kind: str, stats, fallback: Scaler | None = None) -> Scaler:
    """Build a scaler from public statistics alone.

    Standard needs mean and variance of every numeric feature, MinMax needs
    min and max. A feature missing a required statistic raises
    :class:`UnavailableStatisticError` unless ``fallback`` supplies its column.
    """
    kind = _kind(kind)
    enc = EncodingMap.from_schema(stats.schema)
    ident = identity_scaler(kind, enc.width)
    a, b = ident.a.copy(), ident.b.copy()
    need = ("mean", "variance") if kind == STANDARD else ("min", "max")
    if fallback is not None and (fallback.kind != kind or fallback.arity != enc.width):
        raise InvalidArgumentError("fallback scaler kind/arity does not match")
    for col in enc.columns:
        if col.kind != NUMERIC:
            continue
        fs = stats.feature(col.feature)
        if fs.has(*need):
            a[col.start], b[col.start] = (getattr(fs, need[0]), getattr(fs, need[1]))
        elif fallback is not None:
            a[col.start], b[col.start] = fallback.a[col.start], fallback.b[col.start]
        else:
            missing = next(n for n in need if getattr(fs, n) is None)
            raise UnavailableStatisticError(col.feature, missing)
    return Scaler(kind, a, b)


def transform(scaler: Scaler, batch) -> np.ndarray:
    """Standard: ``(x - mean) / sqrt(variance)``; MinMax: ``(x - min) / (max - min)``
    clamped to [0, 1]. Degenerate columns (zero variance, min == max) map to 0."""
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != scaler.arity:
        raise InvalidArgumentError(f"batch has {X.shape[1]} columns, scaler expects {scaler.arity}")
    if scaler.kind == STANDARD:
        sd = np.sqrt(scaler.b)
        live = sd > 0
        out = np.zeros_like(X)
        out[:, live] = (X[:, live] - scaler.a[live]) / sd[live]
        return out
    span = scaler.b - scaler.a
    live = span > 0
    out = np.zeros_like(X)
    out[:, live] = (X[:, live] - scaler.a[live]) / span[live]
    return np.clip(out, 0.0, 1.0)


def inverse_transform(scaler: Scaler, batch) -> np.ndarray:
    """Affine inverse of :func:`transform` (clamping is not undone)."""
    Z = np.asarray(batch, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != scaler.arity:
        raise InvalidArgumentError(f"batch has {Z.shape[1]} columns, scaler expects {scaler.arity}")
    if scaler.kind == STANDARD:
        return Z * np.sqrt(scaler.b) + scaler.a
    return Z * (scaler.b - scaler.a) + scaler.a
