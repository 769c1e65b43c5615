"""Substitute training against a victim boundary.

:func:`run_tempest` is the statistics-driven attack: synthesize queries from
public statistics, send them to the victim, normalize them with a scaler the
adversary builds itself, and distil the victim's answers into a fresh MLP.
:func:`run_baseline` runs the data-free and prada-like reference attacks
through the same training path.
"""
from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from ._seeds import derive_seed
from .data import EncodingMap, TabularDataset
from .errors import InvalidArgumentError, MissingFileError, UnavailableStatisticError
from .querygen import (
    DATA_FREE,
    GenMode,
    QueryBatch,
    batch_from_dataset,
    concat,
    generate,
    jacobian_augment,
    mix_with_initial_samples,
    sample_initial,
)
from .scaling import Scaler, fit_encoded, fit_from_stats, transform

log = logging.getLogger(__name__)

FROM_STATS = "from-stats"
FIT_ON_GENERATED = "fit-on-generated"

DATA_FREE_BASELINE = "data-free"
PRADA_LIKE = "prada-like"

# stream tags for derive_seed
_GEN, _MIX, _INIT, _TRAIN, _PICK = range(5)


@dataclass(frozen=True)
class AttackConfig:
    gen_mode: str = "genvar"
    budget: int = 100
    scaler: str = "standard"
    scaler_source: str = FROM_STATS
    target_mode: str = "soft"
    initial_fraction: float = 0.0
    initial_count: int | None = None
    per_class: bool = False
    fallback: bool = True
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    hidden_dim: int = 90
    prada_lambda: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidArgumentError("budget must be >= 1")
        if not 0.0 <= self.initial_fraction < 1.0:
            raise InvalidArgumentError("initial_fraction must lie in [0, 1)")
        if self.scaler_source not in (FROM_STATS, FIT_ON_GENERATED):
            raise InvalidArgumentError(f"unknown scaler source {self.scaler_source!r}")
        if self.target_mode not in ("soft", "hard"):
            raise InvalidArgumentError(f"unknown target mode {self.target_mode!r}")


@dataclass(frozen=True, eq=False)
class AttackResult:
    substitute: nn.MlpModel
    scaler: Scaler
    queries_used: int
    loss_trace: tuple
    inputs: np.ndarray  # adversary-normalized training inputs
    labels: np.ndarray  # victim responses
    batch: QueryBatch
    rounds: int = 0

    @property
    def model(self) -> nn.MlpModel:
        return self.substitute


def adversary_scaler(config: AttackConfig, stats, X: np.ndarray, enc: EncodingMap) -> Scaler:
    """The adversary's own normalization.

    From statistics where they carry the required fields; columns lacking them
    (or every column, with ``fit-on-generated``) are fitted on the adversary's
    query matrix ``X``.
    """
    fitted = fit_encoded(config.scaler, X, enc)
    if config.scaler_source == FIT_ON_GENERATED or stats is None:
        return fitted
    try:
        return fit_from_stats(config.scaler, stats)
    except UnavailableStatisticError as exc:
        log.info("adversary scaler falls back to generated data: %s", exc)
        return fit_from_stats(config.scaler, stats, fallback=fitted)


def _fit_substitute(Z, responses, n_classes, config: AttackConfig, seed_key=0):
    train_cfg = replace(config.train, target_mode=config.target_mode,
                        seed=derive_seed(config.seed, _TRAIN, seed_key))
    model = nn.init_model(Z.shape[1], config.hidden_dim, n_classes,
                          seed=derive_seed(config.seed, _TRAIN, seed_key, 1))
    return nn.train(model, Z, responses, train_cfg)


def _finish(access, before, batch, X, stats, config, n_classes, rounds=0, scaler=None):
    responses = access.query(batch)
    enc = EncodingMap.from_schema(batch.schema)
    scaler = scaler or adversary_scaler(config, stats, X, enc)
    Z = transform(scaler, X)
    model = _fit_substitute(Z, responses, n_classes, config)
    return AttackResult(substitute=model, scaler=scaler, queries_used=access.queries - before,
                        loss_trace=model.loss_history, inputs=Z, labels=responses, batch=batch,
                        rounds=rounds)


def run_tempest(access, stats, schema, config: AttackConfig,
                initial: TabularDataset | None = None) -> AttackResult:
    """Generate -> (mix initial samples) -> query -> adversary-normalize -> train.

    Only ``access`` (its public schema and predictions), ``stats`` and, when
    ``initial_fraction > 0``, ``initial`` are read.
    """
    schema = tuple(schema) if schema is not None else tuple(stats.schema)
    n_classes = len(access.class_names)
    before = access.queries
    mode = GenMode(config.gen_mode, per_class=config.per_class,
                   seed=derive_seed(config.seed, _GEN), fallback=config.fallback)
    batch = generate(stats, mode, config.budget, schema)
    if config.initial_fraction > 0:
        if initial is None:
            raise InvalidArgumentError("initial_fraction > 0 needs initial samples")
        if config.initial_count is not None:
            k = config.initial_count
            chosen = sample_initial(initial, k, np.random.default_rng(derive_seed(config.seed, _MIX)))
            batch = concat([batch_from_dataset(chosen), batch.subset(np.arange(config.budget - k))])
        else:
            batch = mix_with_initial_samples(batch, initial, config.initial_fraction,
                                             seed=derive_seed(config.seed, _MIX))
    X = batch.prenormalized if batch.is_prenormalized else batch.encoded()
    return _finish(access, before, batch, X, stats, config, n_classes)


def _prada_like(access, initial, config: AttackConfig, n_classes):
    before = access.queries
    rng = np.random.default_rng(derive_seed(config.seed, _INIT))
    n_init = config.initial_count or 10 * len(np.flatnonzero(initial.class_counts()))
    n_init = min(n_init, config.budget, len(initial))
    seeds = sample_initial(initial, n_init, rng)
    batch = batch_from_dataset(seeds)
    enc = EncodingMap.from_schema(batch.schema)
    # the adversary normalizes with what it has: its own genuine samples
    scaler = fit_encoded(config.scaler, batch.encoded(), enc)
    responses = access.query(batch)
    rounds = 0
    while len(batch) < config.budget:
        model = _fit_substitute(transform(scaler, batch.encoded()), responses, n_classes,
                                config, seed_key=rounds + 1)
        grown = jacobian_augment(model, batch, scaler, config.prada_lambda)
        fresh = grown.subset(np.arange(len(batch), len(grown)))
        room = config.budget - len(batch)
        if len(fresh) > room:
            pick = np.sort(np.random.default_rng(derive_seed(config.seed, _PICK, rounds))
                           .choice(len(fresh), size=room, replace=False))
            fresh = fresh.subset(pick)
        responses = np.concatenate([responses, access.query(fresh)])
        batch = concat([batch, fresh])
        rounds += 1
    Z = transform(scaler, batch.encoded())
    model = _fit_substitute(Z, responses, n_classes, config)
    return AttackResult(substitute=model, scaler=scaler, queries_used=access.queries - before,
                        loss_trace=model.loss_history, inputs=Z, labels=responses, batch=batch,
                        rounds=rounds)


def run_baseline(access, kind: str, initial: TabularDataset | None, budget: int,
                 config: AttackConfig) -> AttackResult:
    """Reference attacks.

    ``data-free``: uniform [0, 1] rows in encoded space, which the adversary
    trains on as if already normalized (with a scaler fitted on them, since it
    has no statistics). ``prada-like``: class-balanced genuine seeds (10 per
    class by default) grown by signed-gradient augmentation, one doubling per
    round, until the budget is spent.
    """
    config = replace(config, budget=budget)
    n_classes = len(access.class_names)
    if kind == DATA_FREE_BASELINE:
        cfg = replace(config, gen_mode=DATA_FREE, scaler_source=FIT_ON_GENERATED,
                      initial_fraction=0.0)
        return run_tempest(access, None, access.schema, cfg)
    if kind == PRADA_LIKE:
        if initial is None or len(initial) == 0:
            raise InvalidArgumentError("prada-like baseline needs initial samples")
        return _prada_like(access, initial, config, n_classes)
    raise InvalidArgumentError(f"unknown baseline {kind!r}")


def prada_rounds(n_initial: int, budget: int) -> int:
    """Doubling rounds needed to grow ``n_initial`` seeds to ``budget`` rows."""
    n_initial = min(n_initial, budget)
    return max(0, math.ceil(math.log2(budget / n_initial) - 1e-12))


# -- result files -------------------------------------------------------------

RESULT_FORMAT = "tempest-substitute"
RESULT_VERSION = 1


def save_result(result: AttackResult, path, extra: dict | None = None) -> None:
    """Substitute model, its scaler and the query count as one JSON document."""
    doc = {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "queries_used": result.queries_used,
        "rounds": result.rounds,
        "loss_trace": list(result.loss_trace),
        "scaler": result.scaler.to_dict(),
        "model": base64.b64encode(nn.model_to_bytes(result.substitute)).decode("ascii"),
        **(extra or {}),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_result(path):
    """``(substitute, scaler, document)`` from a :func:`save_result` file."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"result file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path} is not JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT or doc.get("version") != RESULT_VERSION:
        raise InvalidArgumentError(f"{path} is not a substitute result file")
    return nn.model_from_bytes(base64.b64decode(doc["model"])), Scaler.from_dict(doc["scaler"]), doc
