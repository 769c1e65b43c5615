"""Accuracy, fidelity and per-class recall of a substitute on validation rows.

The substitute side always applies the adversary's own scaler to the raw rows;
the victim side is queried through its access handle and so applies S_V.
Argmax ties resolve to the lowest class index everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import TabularDataset, encode
from .errors import InvalidArgumentError
from .querygen import batch_from_dataset
from .scaling import Scaler, transform


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    fidelity: float
    per_class_recall: tuple
    n_evaluated: int


def _require_rows(validation):
    if len(validation) == 0:
        raise InvalidArgumentError("validation set is empty")


def substitute_predictions(model: nn.MlpModel, scaler: Scaler, rows: TabularDataset) -> np.ndarray:
    X, _ = encode(rows)
    return nn.predict(model, transform(scaler, X))


def victim_predictions(access, rows: TabularDataset, count_queries: bool = False) -> np.ndarray:
    probs = access.query(batch_from_dataset(rows, "evaluation"), count=count_queries)
    return np.argmax(probs, axis=1)


def accuracy(model: nn.MlpModel, scaler: Scaler, validation: TabularDataset) -> float:
    _require_rows(validation)
    return float(np.mean(substitute_predictions(model, scaler, validation) == validation.labels))


def fidelity(model: nn.MlpModel, scaler: Scaler, access, validation: TabularDataset,
             count_queries: bool = False) -> float:
    """Share of rows where substitute and victim agree. Evaluation queries are
    kept out of the attack budget unless ``count_queries`` is set."""
    _require_rows(validation)
    mine = substitute_predictions(model, scaler, validation)
    theirs = victim_predictions(access, validation, count_queries)
    return float(np.mean(mine == theirs))


def recall_from_predictions(predicted, labels, n_classes: int) -> np.ndarray:
    """Per-class recall; NaN marks a class with no rows in ``labels``."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        member = labels == c
        if member.any():
            out[c] = np.mean(predicted[member] == c)
    return out


def per_class_recall(model: nn.MlpModel, scaler: Scaler, validation: TabularDataset) -> np.ndarray:
    _require_rows(validation)
    pred = substitute_predictions(model, scaler, validation)
    return recall_from_predictions(pred, validation.labels, validation.n_classes)


def evaluate(model: nn.MlpModel, scaler: Scaler, access, validation: TabularDataset,
             count_queries: bool = False) -> EvalReport:
    _require_rows(validation)
    mine = substitute_predictions(model, scaler, validation)
    theirs = victim_predictions(access, validation, count_queries)
    return EvalReport(
        accuracy=float(np.mean(mine == validation.labels)),
        fidelity=float(np.mean(mine == theirs)),
        per_class_recall=tuple(recall_from_predictions(mine, validation.labels,
                                                       validation.n_classes).tolist()),
        n_evaluated=len(validation),
    )
