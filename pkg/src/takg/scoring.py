"""Scoring functions and the parameter container shared by all five models.

``transe``/``ta_transe``/``ttranse`` score by a Euclidean distance (lower is
more plausible); ``distmult``/``ta_distmult`` by a trilinear product (higher
is more plausible).  Wherever scores must be compared uniformly they are
turned into *plausibilities*: distances are negated.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Value
from .data import DatasetBundle, Split, TemporalFact, TokenVocabulary, build_predicate_sequence
from .encoder import EncoderConfig, LstmWeights, encode, encode_batch

SCORERS = ("transe", "distmult", "ttranse", "ta_transe", "ta_distmult")
TIME_AWARE = ("ta_transe", "ta_distmult")


class Orientation(enum.Enum):
    DISTANCE_LOWER = "distance_lower"
    SIMILARITY_HIGHER = "similarity_higher"


def orientation(scorer: str) -> Orientation:
    check_scorer(scorer)
    return Orientation.SIMILARITY_HIGHER if scorer.endswith("distmult") else Orientation.DISTANCE_LOWER


def check_scorer(scorer: str) -> str:
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; choose from {', '.join(SCORERS)}")
    return scorer


def init_bound(d: int) -> float:
    return 6.0 / np.sqrt(d)


@dataclass
class Model:
    """Trainable tables for one scorer; only the tables it needs are present."""

    scorer: str
    d: int
    entity_table: Parameter
    relation_table: Parameter | None = None
    token_table: Parameter | None = None
    lstm: LstmWeights | None = None
    timestamp_table: Parameter | None = None
    timestamp_index: dict | None = None
    encoder_config: EncoderConfig | None = None

    @classmethod
    def initialize(cls, scorer: str, num_entities: int, vocab: TokenVocabulary, d: int,
                   rng: np.random.Generator, timestamp_keys: Sequence[str] = (), use_bias: bool = False):
        check_scorer(scorer)
        b = init_bound(d)
        model = cls(scorer, d, Parameter("entity", rng.uniform(-b, b, (num_entities, d))))
        if scorer in TIME_AWARE:
            model.token_table = Parameter("token", rng.uniform(-b, b, (len(vocab), d)))
            model.lstm = LstmWeights.initialize(d, rng, use_bias=use_bias)
            model.encoder_config = EncoderConfig(d, use_bias=use_bias)
        else:
            model.relation_table = Parameter("relation", rng.uniform(-b, b, (vocab.num_relations, d)))
        if scorer == "ttranse":
            keys = list(timestamp_keys)
            model.timestamp_index = {k: i for i, k in enumerate(keys)}
            # one spare row keeps the table non-empty when no fact carries time
            model.timestamp_table = Parameter("timestamp", rng.uniform(-b, b, (max(len(keys), 1), d)))
        return model

    @classmethod
    def for_dataset(cls, scorer: str, bundle: DatasetBundle, d: int, rng: np.random.Generator,
                    use_bias: bool = False):
        return cls.initialize(scorer, bundle.num_entities, bundle.token_vocab, d, rng,
                              bundle.timestamp_keys, use_bias)

    @property
    def orientation(self) -> Orientation:
        return orientation(self.scorer)

    @property
    def num_entities(self) -> int:
        return self.entity_table.shape[0]

    def parameters(self) -> list[Parameter]:
        params = [self.entity_table]
        for p in (self.relation_table, self.token_table, self.timestamp_table):
            if p is not None:
                params.append(p)
        if self.lstm is not None:
            params.extend(self.lstm.parameters())
        return params

    def state(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def load_state(self, params: dict[str, Parameter]) -> None:
        """Copy arrays (and Adam state) from ``params`` into this model in place."""
        mine = self.state()
        if set(mine) != set(params):
            raise ValueError(f"parameter names differ: {sorted(set(mine) ^ set(params))}")
        for name, p in mine.items():
            src = params[name]
            if src.shape != p.shape:
                raise ValueError(f"parameter {name!r}: shape {src.shape} != {p.shape}")
            p.data[...] = src.data
            p.m[...] = src.m
            p.v[...] = src.v
            p.step = src.step

    # ------------------------------------------------------------ relations

    def relation_vectors(self, batch: "FactArrays", training: bool = False, dropout: float = 0.0,
                         rng: np.random.Generator | None = None) -> Value:
        """Predicate representation per fact, shape ``(B, d)``."""
        if self.scorer in TIME_AWARE:
            return encode_batch(batch.seqs, self.token_table, self.lstm, self.encoder_config,
                                training, dropout, rng)
        r = ad.dropout(ad.lookup(self.relation_table, batch.rel), dropout, rng, training)
        if self.scorer == "ttranse":
            seen = batch.time >= 0
            t = ad.lookup(self.timestamp_table, np.where(seen, batch.time, 0))
            t = ad.dropout(t, dropout, rng, training)
            mask = ad.constant(np.repeat(seen[:, None].astype(np.float64), self.d, axis=1))
            r = ad.add(r, ad.mul(t, mask))
        return r


def plausibility(scorer: str, es: Value, r: Value, eo: Value) -> Value:
    """Higher-is-better score over the last axis of equally shaped inputs."""
    if orientation(scorer) is Orientation.DISTANCE_LOWER:
        return ad.scale(ad.l2_norm(ad.sub(ad.add(es, r), eo)), -1.0)
    return ad.sum(ad.mul(ad.mul(es, eo), r), axis=-1)


def to_plausibility(scorer: str, score):
    return -score if orientation(scorer) is Orientation.DISTANCE_LOWER else score


@dataclass
class FactArrays:
    """Index arrays for a list of facts in model coordinates."""

    s: np.ndarray
    o: np.ndarray
    rel: np.ndarray
    seqs: list
    time: np.ndarray

    def __len__(self):
        return len(self.s)

    def subset(self, idx) -> "FactArrays":
        idx = np.asarray(idx, dtype=np.int64)
        return FactArrays(self.s[idx], self.o[idx], self.rel[idx], [self.seqs[i] for i in idx], self.time[idx])


def fact_arrays(split: Split, vocab: TokenVocabulary, timestamp_index: dict | None = None) -> FactArrays:
    offset = len(vocab) - vocab.num_relations
    rel = np.array([seq[0] - offset for seq in split.sequences], dtype=np.int64)
    if timestamp_index is None:
        time = np.full(len(split), -1, dtype=np.int64)
    else:
        time = np.array([timestamp_index.get(f.time_key(), -1) for f in split.facts], dtype=np.int64)
    return FactArrays(np.asarray(split.subjects, dtype=np.int64), np.asarray(split.objects, dtype=np.int64),
                      rel, list(split.sequences), time)


# ------------------------------------------------------- single-fact scores
# Direct transcriptions, used for unit checks and as the brute-force oracle.

def transe_score(s: int, p: int, o: int, model: Model) -> Value:
    es = ad.lookup(model.entity_table, s)
    ep = ad.lookup(model.relation_table, p)
    eo = ad.lookup(model.entity_table, o)
    return ad.l2_norm(ad.sub(ad.add(es, ep), eo))


def distmult_score(s: int, p: int, o: int, model: Model) -> Value:
    es = ad.lookup(model.entity_table, s)
    ep = ad.lookup(model.relation_table, p)
    eo = ad.lookup(model.entity_table, o)
    return ad.sum(ad.mul(ad.mul(es, eo), ep))


def ta_transe_score(s: int, seq: Sequence[int], o: int, model: Model, training: bool = False,
                    dropout: float = 0.0, rng=None) -> Value:
    ep = encode(seq, model.token_table, model.lstm, model.encoder_config, training, dropout, rng)
    es = ad.lookup(model.entity_table, s)
    eo = ad.lookup(model.entity_table, o)
    return ad.l2_norm(ad.sub(ad.add(es, ep), eo))


def ta_distmult_score(s: int, seq: Sequence[int], o: int, model: Model, training: bool = False,
                      dropout: float = 0.0, rng=None) -> Value:
    ep = encode(seq, model.token_table, model.lstm, model.encoder_config, training, dropout, rng)
    es = ad.lookup(model.entity_table, s)
    eo = ad.lookup(model.entity_table, o)
    return ad.sum(ad.mul(ad.mul(es, eo), ep))


def ttranse_score(s: int, p: int, o: int, time_key: str | None, model: Model) -> Value:
    """``||e_s + e_p + e_t - e_o||``; unseen or missing timestamps use e_t = 0."""
    es = ad.lookup(model.entity_table, s)
    ep = ad.lookup(model.relation_table, p)
    eo = ad.lookup(model.entity_table, o)
    t = model.timestamp_index.get(time_key) if time_key is not None else None
    x = ad.add(es, ep)
    if t is not None:
        x = ad.add(x, ad.lookup(model.timestamp_table, t))
    return ad.l2_norm(ad.sub(x, eo))


def score_fact(model: Model, fact: TemporalFact, bundle: DatasetBundle, seq=None) -> Value:
    """Native-orientation score of one fact through the single-fact path."""
    s = bundle.entity_vocab[fact.subject]
    o = bundle.entity_vocab[fact.object]
    return score_ids(model, s, o, seq if seq is not None else build_predicate_sequence(fact, bundle.token_vocab), fact.time_key(), bundle.token_vocab)


def score_ids(model: Model, s: int, o: int, seq, time_key, vocab: TokenVocabulary) -> Value:
    if model.scorer == "ta_transe":
        return ta_transe_score(s, seq, o, model)
    if model.scorer == "ta_distmult":
        return ta_distmult_score(s, seq, o, model)
    p = vocab.relation_index(vocab.names[seq[0]])
    if model.scorer == "transe":
        return transe_score(s, p, o, model)
    if model.scorer == "distmult":
        return distmult_score(s, p, o, model)
    return ttranse_score(s, p, o, time_key, model)


def model_from_parameters(scorer: str, params: dict[str, Parameter], timestamp_keys: Sequence[str] = (),
                          encoder: dict | None = None) -> Model:
    """Rebuild a :class:`Model` around already-populated parameters."""
    check_scorer(scorer)
    try:
        entity = params["entity"]
        model = Model(scorer, entity.shape[1], entity)
        if scorer in TIME_AWARE:
            model.token_table = params["token"]
            lstm = {k[len("lstm."):]: p for k, p in params.items() if k.startswith("lstm.")}
            U = {g: lstm[f"U_{g}"] for g in "ifog"}
            W = {g: lstm[f"W_{g}"] for g in "ifog"}
            b = {g: lstm[f"b_{g}"] for g in "ifog"} if "b_i" in lstm else None
            model.lstm = LstmWeights(U, W, b)
            model.encoder_config = EncoderConfig(model.d, use_bias=b is not None, **(encoder or {}))
        else:
            model.relation_table = params["relation"]
        if scorer == "ttranse":
            model.timestamp_table = params["timestamp"]
            model.timestamp_index = {k: i for i, k in enumerate(timestamp_keys)}
    except KeyError as exc:
        raise ValueError(f"checkpoint lacks parameter {exc.args[0]!r} needed by {scorer}") from None
    extra = set(params) - set(model.state())
    if extra:
        raise ValueError(f"unexpected parameters for {scorer}: {sorted(extra)}")
    return model
