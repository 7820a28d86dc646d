"""Entity ranking: subject and object completion, raw and filtered.

Ties are resolved by giving the correct entity the mean position of its tie
group, so a constant scorer ranks every answer at ``(|E| + 1) / 2``.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .data import MODIFIER_TOKENS, TEMPORAL_TOKENS, DatasetBundle
from .encoder import encode
from .scoring import TIME_AWARE, FactArrays, Model, Orientation, fact_arrays

SIDES = ("subject", "object")
SETTINGS = ("raw", "filtered")
HITS = (1, 3, 10)


class EvaluationError(Exception):
    pass


@dataclass
class FilterMaps:
    """Known answers per partial query, built from all splits."""

    objects: dict = field(default_factory=dict)   # (s, key) -> set of o
    subjects: dict = field(default_factory=dict)  # (key, o) -> set of s
    time_aware: bool = True

    def key(self, seq) -> tuple:
        return tuple(seq) if self.time_aware else (seq[0],)

    def known(self, side: str, s: int, seq, o: int) -> set:
        k = self.key(seq)
        if side == "object":
            return self.objects.get((s, k), set())
        return self.subjects.get((k, o), set())


def build_filter_maps(index, time_aware: bool = True) -> FilterMaps:
    """``index`` is an iterable of ``(s, sequence, o)`` triples."""
    objects, subjects = defaultdict(set), defaultdict(set)
    for s, seq, o in index:
        k = tuple(seq) if time_aware else (seq[0],)
        objects[(s, k)].add(o)
        subjects[(k, o)].add(s)
    return FilterMaps(dict(objects), dict(subjects), time_aware)


def rank_from_scores(plaus: np.ndarray, true_idx: int, exclude=()) -> float:
    """1-based mean-tie rank of ``true_idx`` in higher-is-better ``plaus``."""
    target = plaus[true_idx]
    keep = np.ones(plaus.shape[0], dtype=bool)
    for e in exclude:
        if e != true_idx:
            keep[e] = False
    kept = plaus[keep]
    better = int(np.count_nonzero(kept > target))
    ties = int(np.count_nonzero(kept == target)) - 1
    return 1.0 + better + ties / 2.0


def relation_matrix(model: Model, arrays: FactArrays, cache: bool = True) -> np.ndarray:
    """Predicate vectors for every query in evaluation mode, shape ``(n, d)``."""
    if model.scorer not in TIME_AWARE:
        return model.relation_vectors(arrays, training=False).data
    if not cache:
        return np.stack([encode(seq, model.token_table, model.lstm, model.encoder_config).data
                         for seq in arrays.seqs])
    distinct = sorted(set(arrays.seqs))
    where = {seq: i for i, seq in enumerate(distinct)}
    enc = np.empty((len(distinct), model.d))
    # bounded batches keep memory flat on large splits
    for lo in range(0, len(distinct), 4096):
        chunk = distinct[lo:lo + 4096]
        enc[lo:lo + len(chunk)] = model.relation_vectors(
            FactArrays(np.zeros(len(chunk), np.int64), np.zeros(len(chunk), np.int64),
                       np.zeros(len(chunk), np.int64), chunk, np.full(len(chunk), -1)), training=False).data
    return enc[[where[seq] for seq in arrays.seqs]]


def candidate_plausibility(model: Model, side: str, es: np.ndarray, r: np.ndarray, eo: np.ndarray) -> np.ndarray:
    """Plausibility of every entity as the missing ``side``; shape ``(n, |E|)``."""
    E = model.entity_table.data
    if model.orientation is Orientation.SIMILARITY_HIGHER:
        # einsum instead of BLAS: per-row results must not depend on chunking
        q = es * r if side == "object" else r * eo
        return np.einsum("nd,ed->ne", q, E, optimize=False)
    if side == "object":
        diff = (es + r)[:, None, :] - E[None, :, :]
    else:
        diff = (E[None, :, :] + r[:, None, :]) - eo[:, None, :]
    return -np.sqrt(np.sum(diff * diff, axis=-1))


def compute_ranks(model: Model, arrays: FactArrays, filters: FilterMaps | None, cache: bool = True,
                  chunk_size: int | None = None, workers: int = 1) -> dict:
    """Ranks keyed by ``(setting, side)``; filtered ranks need ``filters``."""
    n = len(arrays)
    if n == 0:
        raise EvaluationError("cannot evaluate an empty split")
    num_e = model.num_entities
    if arrays.s.max() >= num_e or arrays.o.max() >= num_e:
        raise EvaluationError("query entity outside the model's entity table")
    R = relation_matrix(model, arrays, cache)
    if workers > 1 and n > 1:
        from concurrent.futures import ThreadPoolExecutor

        parts = np.array_split(np.arange(n), min(workers, n))
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(
                lambda idx: _rank_block(model, arrays.subset(idx), R[idx], filters, chunk_size), parts))
        return {k: np.concatenate([r[k] for r in results]) for k in results[0]}
    return _rank_block(model, arrays, R, filters, chunk_size)


def _rank_block(model: Model, arrays: FactArrays, R: np.ndarray, filters: FilterMaps | None,
                chunk_size: int | None) -> dict:
    n = len(arrays)
    num_e = model.num_entities
    E = model.entity_table.data
    if chunk_size is None:
        # distance scorers materialise (chunk, |E|, d)
        chunk_size = 4096 if model.orientation is Orientation.SIMILARITY_HIGHER else max(1, 2_000_000 // (num_e * model.d))
    out = {(st, side): np.empty(n) for st in SETTINGS for side in SIDES}
    for lo in range(0, n, chunk_size):
        hi = min(n, lo + chunk_size)
        s, o, r = arrays.s[lo:hi], arrays.o[lo:hi], R[lo:hi]
        for side in SIDES:
            P = candidate_plausibility(model, side, E[s], r, E[o])
            truth = o if side == "object" else s
            for j in range(hi - lo):
                t = int(truth[j])
                out[("raw", side)][lo + j] = rank_from_scores(P[j], t)
                if filters is not None:
                    known = filters.known(side, int(s[j]), arrays.seqs[lo + j], int(o[j]))
                    out[("filtered", side)][lo + j] = rank_from_scores(P[j], t, known)
    if filters is None:
        for side in SIDES:
            del out[("filtered", side)]
    return out


def metrics(ranks: np.ndarray, hits=HITS) -> dict:
    ranks = np.asarray(ranks, dtype=np.float64)
    m = {"mr": float(np.mean(ranks)), "mrr": float(np.mean(1.0 / ranks))}
    for k in hits:
        m[f"hits@{k}"] = float(np.mean(ranks <= k))
    return m


@dataclass
class RankingReport:
    """Per-query ranks and aggregate metrics (fractions; shown x100)."""

    ranks: dict
    split: str = ""
    scorer: str = ""

    def metrics(self, setting: str = "filtered", direction: str = "both") -> dict:
        if direction == "both":
            r = np.concatenate([self.ranks[(setting, "subject")], self.ranks[(setting, "object")]])
        else:
            r = self.ranks[(setting, direction)]
        return metrics(r)

    @property
    def settings(self) -> list[str]:
        return [s for s in SETTINGS if (s, "object") in self.ranks]

    def mrr(self, setting: str = "filtered") -> float:
        return self.metrics(setting)["mrr"]

    def rows(self) -> list[dict]:
        out = []
        for setting in self.settings:
            for direction in ("subject", "object", "both"):
                for name, value in self.metrics(setting, direction).items():
                    out.append({"split": self.split, "scorer": self.scorer, "setting": setting,
                                "direction": direction, "metric": name, "value": value})
        return out

    def to_tsv(self) -> str:
        lines = ["split\tscorer\tsetting\tdirection\tmetric\tvalue"]
        for row in self.rows():
            lines.append("\t".join([row["split"], row["scorer"], row["setting"], row["direction"],
                                    row["metric"], repr(row["value"])]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"split": self.split, "scorer": self.scorer, "metrics": self.rows()}, indent=1)

    def format_table(self) -> str:
        head = f"{'setting':<9} {'direction':<9} {'MRR':>6} {'MR':>9} {'H@1':>6} {'H@3':>6} {'H@10':>6}"
        lines = [head, "-" * len(head)]
        for setting in self.settings:
            for direction in ("subject", "object", "both"):
                m = self.metrics(setting, direction)
                lines.append(f"{setting:<9} {direction:<9} {100 * m['mrr']:6.1f} {m['mr']:9.1f} "
                             f"{100 * m['hits@1']:6.1f} {100 * m['hits@3']:6.1f} {100 * m['hits@10']:6.1f}")
        return "\n".join(lines)

    def per_query_tsv(self) -> str:
        lines = ["query\tsetting\tdirection\trank"]
        for (setting, side), ranks in sorted(self.ranks.items()):
            lines.extend(f"{i}\t{setting}\t{side}\t{r!r}" for i, r in enumerate(ranks.tolist()))
        return "\n".join(lines) + "\n"


def evaluate_split(model: Model, bundle: DatasetBundle, split: str = "test", setting: str = "both",
                   time_aware_filter: bool = True, cache: bool = True, filters: FilterMaps | None = None,
                   workers: int = 1) -> RankingReport:
    if setting not in ("raw", "filtered", "both"):
        raise ValueError(f"unknown setting {setting!r}")
    facts = bundle.split(split)
    if len(facts) == 0:
        raise EvaluationError(f"split {split!r} is empty")
    if model.num_entities != bundle.num_entities:
        raise EvaluationError(f"model has {model.num_entities} entities, dataset has {bundle.num_entities}")
    arrays = fact_arrays(facts, bundle.token_vocab, model.timestamp_index)
    if setting in ("filtered", "both") and filters is None:
        filters = build_filter_maps(bundle.filter_index, time_aware_filter)
    if setting == "raw":
        filters = None
    ranks = compute_ranks(model, arrays, filters, cache=cache, workers=workers)
    if setting == "filtered":
        ranks = {k: v for k, v in ranks.items() if k[0] == "filtered"}
    return RankingReport(ranks, split, model.scorer)


def rank_entity(model: Model, s: int, seq, o: int, side: str, filters: FilterMaps | None = None,
                time_index: int = -1) -> float:
    """Rank of the true ``side`` entity for one query; filtered iff ``filters`` is given."""
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    if not (0 <= s < model.num_entities and 0 <= o < model.num_entities):
        raise EvaluationError("true entity missing from the entity table")
    rel = seq[0] - len(TEMPORAL_TOKENS) - len(MODIFIER_TOKENS)
    arrays = FactArrays(np.array([s]), np.array([o]), np.array([rel]), [tuple(seq)], np.array([time_index]))
    ranks = compute_ranks(model, arrays, filters, chunk_size=1)
    return float(ranks[("filtered" if filters is not None else "raw", side)][0])
