"""Mini-batch training with sampled negatives, softmax cross-entropy and Adam.

Each fact contributes two (k+1)-way cross-entropy terms: one ranking the
true object against k corrupted objects, one doing the same for the
subject.  Training stops early once filtered validation MRR drops below the
best value seen, and the best parameters are restored.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import autodiff as ad
from .data import DatasetBundle
from .scoring import FactArrays, Model, check_scorer, fact_arrays, plausibility

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    scorer: str = "ta_distmult"
    d: int = 100
    lr: float = 0.001
    batch_size: int = 512
    num_negatives: int = 500
    max_epochs: int = 500
    validate_every: int = 20
    dropout: float = 0.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    use_bias: bool = False
    time_aware_filter: bool = True

    def __post_init__(self):
        check_scorer(self.scorer)
        if self.d < 1 or self.batch_size < 1 or self.num_negatives < 1 or self.max_epochs < 1:
            raise ValueError("d, batch_size, num_negatives and max_epochs must be positive")
        if self.validate_every < 1:
            raise ValueError("validate_every must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown training options: {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingError(RuntimeError):
    """Numeric failure; ``model`` holds the last good parameters."""

    def __init__(self, message: str, model: Model | None = None, epoch: int = 0):
        super().__init__(message)
        self.model = model
        self.epoch = epoch


@dataclass
class TrainState:
    model: Model
    epoch: int = 0
    best_valid_mrr: float | None = None
    best_epoch: int = 0
    stopped_early: bool = False
    epoch_losses: list = field(default_factory=list)
    validations: list = field(default_factory=list)


def sample_negatives(true_ids, k: int, entity_count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws with replacement over all entities except the true one.

    ``true_ids`` may be a scalar (returns shape ``(k,)``) or an array
    (returns ``true_ids.shape + (k,)``).
    """
    if k < 1:
        raise ValueError("need at least one negative")
    if entity_count < 2:
        raise ValueError("negative sampling needs at least two entities")
    true_ids = np.asarray(true_ids, dtype=np.int64)
    draws = rng.integers(0, entity_count - 1, size=true_ids.shape + (k,))
    # skip over the true id so the remaining entity_count - 1 ids stay uniform
    return draws + (draws >= true_ids[..., None])


def batch_loss(model: Model, batch: FactArrays, config: TrainConfig, rng: np.random.Generator,
               training: bool = True, negatives: tuple | None = None) -> ad.Value:
    """Mean over facts of object-side plus subject-side cross-entropy.

    ``negatives`` may supply precomputed ``(neg_objects, neg_subjects)`` of
    shape ``(B, k)``; otherwise they are drawn from ``rng``.
    """
    n_ent = model.num_entities
    if negatives is None:
        neg_o = sample_negatives(batch.o, config.num_negatives, n_ent, rng)
        neg_s = sample_negatives(batch.s, config.num_negatives, n_ent, rng)
    else:
        neg_o, neg_s = negatives
    B, k = neg_o.shape
    p = config.dropout
    r = model.relation_vectors(batch, training, p, rng)
    r = ad.expand(r, 1, k + 1)

    cand_o = np.concatenate([batch.o[:, None], neg_o], axis=1)
    es = ad.expand(ad.dropout(ad.lookup(model.entity_table, batch.s), p, rng, training), 1, k + 1)
    eo = ad.dropout(ad.lookup(model.entity_table, cand_o), p, rng, training)
    obj_term = ad.softmax_cross_entropy(plausibility(model.scorer, es, r, eo), np.zeros(B, dtype=np.int64))

    cand_s = np.concatenate([batch.s[:, None], neg_s], axis=1)
    es = ad.dropout(ad.lookup(model.entity_table, cand_s), p, rng, training)
    eo = ad.expand(ad.dropout(ad.lookup(model.entity_table, batch.o), p, rng, training), 1, k + 1)
    subj_term = ad.softmax_cross_entropy(plausibility(model.scorer, es, r, eo), np.zeros(B, dtype=np.int64))

    return ad.mean(ad.add(obj_term, subj_term))


def fact_loss(model: Model, fact_index: int, arrays: FactArrays, config: TrainConfig,
              rng: np.random.Generator, training: bool = True) -> ad.Value:
    """Loss of a single fact (row ``fact_index`` of ``arrays``)."""
    return batch_loss(model, arrays.subset([fact_index]), config, rng, training)


def _snapshot(model: Model) -> dict:
    return {p.name: (p.data.copy(), p.m.copy(), p.v.copy(), p.step) for p in model.parameters()}


def _restore(model: Model, snap: dict) -> None:
    for p in model.parameters():
        data, m, v, step = snap[p.name]
        p.data[...] = data
        p.m[...] = m
        p.v[...] = v
        p.step = step
        p.grad = np.zeros_like(p.data)


def default_validator(bundle: DatasetBundle, config: TrainConfig) -> Callable[[Model], float] | None:
    if len(bundle.valid) == 0:
        return None
    from .evaluation import build_filter_maps, evaluate_split

    filters = build_filter_maps(bundle.filter_index, config.time_aware_filter)

    def validate(model: Model) -> float:
        return evaluate_split(model, bundle, "valid", setting="filtered", filters=filters).mrr("filtered")

    return validate


def train(bundle: DatasetBundle, config: TrainConfig, validator: Callable[[Model], float] | None = "default",
          log_sink: Callable[[dict], None] | None = None, model: Model | None = None) -> TrainState:
    """Train ``config.scorer`` on ``bundle.train``.

    ``validator`` maps a model to a validation MRR; the default evaluates
    filtered MRR on the validation split.  ``None`` disables early stopping.
    Every epoch and validation is reported to ``log_sink`` as a dict.
    """
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = Model.for_dataset(config.scorer, bundle, config.d, rng, config.use_bias)
    if validator == "default":
        validator = default_validator(bundle, config)
    emit = log_sink or (lambda rec: log.info(json.dumps(rec)))
    arrays = fact_arrays(bundle.train, bundle.token_vocab, model.timestamp_index)
    n = len(arrays)
    params = model.parameters()
    state = TrainState(model)
    best_snap = None
    last_good = _snapshot(model)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            try:
                loss = batch_loss(model, arrays.subset(idx), config, rng)
            except ad.NumericError as exc:
                _restore(model, last_good)
                raise TrainingError(f"epoch {epoch}: {exc}", model, epoch) from exc
            value = float(loss.data)
            if not np.isfinite(value):
                _restore(model, last_good)
                raise TrainingError(f"epoch {epoch}: non-finite loss", model, epoch)
            ad.backward(loss)
            ad.adam_step(params, config.lr, config.beta1, config.beta2, config.eps)
            total += value * len(idx)
        mean_loss = total / n
        state.epoch = epoch
        state.epoch_losses.append(mean_loss)
        emit({"event": "epoch", "epoch": epoch, "mean_loss": mean_loss,
              "seconds": round(time.perf_counter() - t0, 3)})
        last_good = _snapshot(model)

        if validator is None or (epoch % config.validate_every and epoch != config.max_epochs):
            continue
        mrr = float(validator(model))
        state.validations.append((epoch, mrr))
        if state.best_valid_mrr is None or mrr >= state.best_valid_mrr:
            state.best_valid_mrr, state.best_epoch = mrr, epoch
            best_snap = last_good
            decision = "continue"
        else:
            decision = "stop"
        if decision == "continue" and epoch == config.max_epochs:
            decision = "max_epochs"
        emit({"event": "validation", "epoch": epoch, "mrr": mrr, "best_mrr": state.best_valid_mrr,
              "best_epoch": state.best_epoch, "decision": decision})
        if decision == "stop":
            state.stopped_early = True
            break

    if best_snap is not None and state.best_epoch != state.epoch:
        _restore(model, best_snap)
    return state


def select_dropout(bundle: DatasetBundle, config: TrainConfig, grid=(0.0, 0.4),
                   log_sink: Callable[[dict], None] | None = None) -> tuple[TrainState, TrainConfig]:
    """Train once per dropout value and keep the run with the best validation MRR."""
    if len(bundle.valid) == 0:
        raise ValueError("dropout selection needs a validation split")
    best = None
    for p in grid:
        cfg = TrainConfig.from_dict({**config.to_dict(), "dropout": float(p)})
        state = train(bundle, cfg, log_sink=log_sink)
        if log_sink is not None:
            log_sink({"event": "dropout_trial", "dropout": cfg.dropout, "best_valid_mrr": state.best_valid_mrr})
        if best is None or state.best_valid_mrr > best[0].best_valid_mrr:
            best = (state, cfg)
    return best
