"""Small synthetic temporal KGs for smoke tests and demos."""
from __future__ import annotations

import os

import numpy as np

from .data import DatasetBundle, Modifier, TemporalFact, Timestamp, build_dataset


def _timestamp(rng: np.random.Generator) -> tuple[Modifier, Timestamp | None]:
    kind = rng.integers(0, 5)
    year = int(rng.integers(1900, 2020))
    if kind == 0:
        return Modifier.NONE, None
    if kind == 1:
        return Modifier.NONE, Timestamp(year)
    if kind == 2:
        return Modifier.SINCE, Timestamp(year, int(rng.integers(1, 13)))
    if kind == 3:
        return Modifier.UNTIL, Timestamp(year)
    return Modifier.NONE, Timestamp(year, int(rng.integers(1, 13)), int(rng.integers(1, 29)))


def overfit_facts(n_facts: int = 50, n_relations: int = 5, n_entities: int = 40, seed: int = 0) -> list[TemporalFact]:
    """Facts where each (subject, relation) and (relation, object) has one answer.

    Subjects and objects come from disjoint halves of the entity set, with a
    mix of timeless, year, month and day timestamps and since/until modifiers.
    """
    rng = np.random.default_rng(seed)
    half = n_entities // 2
    facts, used_sr, used_ro = [], set(), set()
    while len(facts) < n_facts:
        s, o = int(rng.integers(half)), half + int(rng.integers(half))
        r = int(rng.integers(n_relations))
        if (s, r) in used_sr or (r, o) in used_ro:
            continue
        used_sr.add((s, r))
        used_ro.add((r, o))
        mod, ts = _timestamp(rng)
        facts.append(TemporalFact(f"e{s}", f"r{r}", f"e{o}", mod, ts))
    return facts


def time_only_facts(n_subjects: int = 4, n_years: int = 10, n_objects: int = 10, seed: int = 0) -> list[TemporalFact]:
    """Facts told apart only by their timestamp: ``(s, holds, o_t, year_t)``.

    For a given subject the object changes with the year, so a time-blind
    model cannot fit them all.
    """
    rng = np.random.default_rng(seed)
    facts = []
    for s in range(n_subjects):
        objs = rng.permutation(n_objects)[:n_years]
        for t, o in enumerate(objs):
            facts.append(TemporalFact(f"s{s}", "holds", f"o{o}", Modifier.NONE, Timestamp(2000 + t)))
    return facts


def bundle(facts: list[TemporalFact], valid: list[TemporalFact] | None = None,
           test: list[TemporalFact] | None = None) -> DatasetBundle:
    return build_dataset(facts, valid or [], test or [])


def write_split_files(directory: str | os.PathLike, train, valid=(), test=(), prefix: str = "") -> tuple[str, str, str]:
    """Write facts as tab-separated files ``<prefix>train.txt`` etc."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, facts in (("train", train), ("valid", valid), ("test", test)):
        path = os.path.join(directory, f"{prefix}{name}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            for f in facts:
                fh.write(format_fact(f) + "\n")
        paths.append(path)
    return tuple(paths)


def format_fact(f: TemporalFact) -> str:
    cols = [f.subject, f.relation, f.object]
    if f.modifier is not Modifier.NONE:
        cols.append(f.modifier.value)
    if f.timestamp is not None:
        ts = f.timestamp
        cols.append("-".join([f"{ts.year:04d}",
                              "##" if ts.month is None else f"{ts.month:02d}",
                              "##" if ts.day is None else f"{ts.day:02d}"]))
    return "\t".join(cols)
