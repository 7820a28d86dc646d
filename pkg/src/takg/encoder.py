"""LSTM encoder turning a predicate sequence into a d-dimensional vector.

Gates follow the row-vector convention ``i = sigmoid(h U_i + x W_i)``; the
representation of a sequence is its last hidden state.  Cell and hidden
activations default to the identity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Value

GATES = ("i", "f", "o", "g")
_ACTIVATIONS = {"identity": ad.identity, "tanh": ad.tanh, "sigmoid": ad.sigmoid}


@dataclass(frozen=True)
class EncoderConfig:
    d: int
    gate_activation: str = "sigmoid"
    cell_activation: str = "identity"
    hidden_activation: str = "identity"
    use_bias: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        for act in (self.gate_activation, self.cell_activation, self.hidden_activation):
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")


class LstmWeights:
    """Recurrent matrices ``U_*`` and input matrices ``W_*`` (d x d) per gate."""

    def __init__(self, U: dict, W: dict, b: dict | None = None):
        self.U = U
        self.W = W
        self.b = b or {}
        d = U["i"].shape[0]
        for mats in (U, W):
            for gate in GATES:
                if mats[gate].shape != (d, d):
                    raise ad.ShapeError(f"gate {gate}: expected ({d}, {d}), got {mats[gate].shape}")
        for gate, bias in self.b.items():
            if bias.shape != (d,):
                raise ad.ShapeError(f"bias {gate}: expected ({d},), got {bias.shape}")

    @property
    def d(self) -> int:
        return self.U["i"].shape[0]

    @classmethod
    def initialize(cls, d: int, rng: np.random.Generator, use_bias: bool = False, bound: float | None = None):
        # 6/sqrt(d), as used for the embedding tables, saturates the recurrence
        bound = 1.0 / np.sqrt(d) if bound is None else bound
        U = {g: Parameter(f"lstm.U_{g}", rng.uniform(-bound, bound, (d, d))) for g in GATES}
        W = {g: Parameter(f"lstm.W_{g}", rng.uniform(-bound, bound, (d, d))) for g in GATES}
        b = {g: Parameter(f"lstm.b_{g}", np.zeros(d)) for g in GATES} if use_bias else None
        return cls(U, W, b)

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str = "lstm."):
        """Build from ``{"U_i": ..., "W_i": ..., ["b_i": ...]}``."""
        U = {g: Parameter(f"{prefix}U_{g}", arrays[f"U_{g}"]) for g in GATES}
        W = {g: Parameter(f"{prefix}W_{g}", arrays[f"W_{g}"]) for g in GATES}
        b = None
        if all(f"b_{g}" in arrays for g in GATES):
            b = {g: Parameter(f"{prefix}b_{g}", arrays[f"b_{g}"]) for g in GATES}
        return cls(U, W, b)

    def parameters(self) -> list[Parameter]:
        params = [self.U[g] for g in GATES] + [self.W[g] for g in GATES]
        return params + [self.b[g] for g in GATES if g in self.b]


def _lstm_steps(xs: list[Value], weights: LstmWeights, config: EncoderConfig) -> Value:
    gate_act = _ACTIVATIONS[config.gate_activation]
    cell_act = _ACTIVATIONS[config.cell_activation]
    hidden_act = _ACTIVATIONS[config.hidden_activation]
    n = xs[0].shape[0]
    h = c = None
    for x in xs:
        pre = {}
        for gate in GATES:
            z = ad.matmul(x, weights.W[gate], row_stable=True)
            if h is not None:  # h_0 = 0 contributes nothing
                z = ad.add(ad.matmul(h, weights.U[gate], row_stable=True), z)
            if gate in weights.b:
                z = ad.add(z, ad.expand(weights.b[gate], 0, n))
            pre[gate] = z
        i, f, o = (gate_act(pre[k]) for k in "ifo")
        g = cell_act(pre["g"])
        ig = ad.mul(i, g)
        c = ig if c is None else ad.add(ad.mul(f, c), ig)
        h = ad.mul(o, hidden_act(c))
    return h


def encode_batch(seqs: Sequence[Sequence[int]], token_table: Value, weights: LstmWeights,
                 config: EncoderConfig | None = None, training: bool = False,
                 dropout: float = 0.0, rng: np.random.Generator | None = None) -> Value:
    """Encode many sequences; returns a ``(len(seqs), d)`` Value.

    Sequences are grouped by length so no padding enters the recurrence; the
    row for each sequence equals :func:`encode` of it bit for bit.
    """
    config = config or EncoderConfig(weights.d)
    if len(seqs) == 0:
        raise ValueError("no sequences to encode")
    lengths = np.array([len(s) for s in seqs])
    if lengths.min() < 1:
        raise ValueError("cannot encode an empty predicate sequence")
    buckets = []
    order = []
    for length in np.unique(lengths):
        idx = np.flatnonzero(lengths == length)
        ids = np.array([seqs[k] for k in idx], dtype=np.int64)
        xs = []
        for step in range(length):
            x = ad.lookup(token_table, ids[:, step])
            xs.append(ad.dropout(x, dropout, rng, training))
        buckets.append(_lstm_steps(xs, weights, config))
        order.append(idx)
    if len(buckets) == 1:
        return buckets[0]
    stacked = ad.concat(buckets, axis=0)
    inverse = np.empty(len(seqs), dtype=np.int64)
    inverse[np.concatenate(order)] = np.arange(len(seqs))
    return ad.take(stacked, inverse)


def encode(seq: Sequence[int], token_table: Value, weights: LstmWeights,
           config: EncoderConfig | None = None, training: bool = False,
           dropout: float = 0.0, rng: np.random.Generator | None = None) -> Value:
    """Last hidden state for one predicate sequence, shape ``(d,)``."""
    if len(seq) == 0:
        raise ValueError("cannot encode an empty predicate sequence")
    out = encode_batch([seq], token_table, weights, config, training, dropout, rng)
    return ad.lookup(out, np.int64(0))
