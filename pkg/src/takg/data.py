"""Temporal fact files, vocabularies and predicate sequences.

A fact line is tab-separated::

    subject <TAB> relation <TAB> object [<TAB> modifier] [<TAB> timestamp]

Timestamps are ``YYYY``, ``YYYY-MM`` or ``YYYY-MM-DD``; unknown components
may be wildcarded with ``#`` (``1961-##-##``).  Each timestamp decomposes
into temporal tokens: four year digits (``1y``), one month token (``01m``)
and two day digits (``0d``), so the temporal alphabet has 32 symbols.
"""
from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class DataError(Exception):
    """Raised for unreadable or inconsistent dataset files."""


class ParseError(DataError):
    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.message = message
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class VocabularyError(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UnsupportedTimestampError(DataError):
    pass


class Dialect(str, enum.Enum):
    PLAIN = "plain"
    ICEWS = "icews"
    YAGO = "yago"
    WIKIDATA = "wikidata"


class Modifier(str, enum.Enum):
    NONE = "none"
    SINCE = "occursSince"
    UNTIL = "occursUntil"

    @property
    def token(self) -> str:
        return _MODIFIER_TOKENS[self]


_MODIFIER_TOKENS = {Modifier.SINCE: "since", Modifier.UNTIL: "until"}
_MODIFIER_LITERALS = {
    "occurssince": Modifier.SINCE,
    "occursuntil": Modifier.UNTIL,
    "since": Modifier.SINCE,
    "until": Modifier.UNTIL,
}

YEAR_TOKENS = tuple(f"{i}y" for i in range(10))
MONTH_TOKENS = tuple(f"{i:02d}m" for i in range(1, 13))
DAY_TOKENS = tuple(f"{i}d" for i in range(10))
TEMPORAL_TOKENS = YEAR_TOKENS + MONTH_TOKENS + DAY_TOKENS
MODIFIER_TOKENS = ("since", "until")


@dataclass(frozen=True, order=True)
class Timestamp:
    year: int | None = None
    month: int | None = None
    day: int | None = None

    def __post_init__(self):
        if self.year is None and self.month is None and self.day is None:
            raise ValueError("timestamp needs at least one field")
        if self.day is not None and self.month is None:
            raise ValueError("day given without month")
        if self.month is not None and self.year is None:
            raise ValueError("month given without year")
        if self.month is not None and not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")
        if self.day is not None and not 1 <= self.day <= 31:
            raise ValueError(f"day out of range: {self.day}")

    @property
    def granularity(self) -> str:
        if self.day is not None:
            return "day"
        if self.month is not None:
            return "month"
        return "year"

    def __str__(self):
        parts = [f"{self.year:04d}" if self.year >= 0 else str(self.year)]
        if self.month is not None:
            parts.append(f"{self.month:02d}")
        if self.day is not None:
            parts.append(f"{self.day:02d}")
        return "-".join(parts)

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        """Parse ``YYYY[-MM[-DD]]`` with ``#`` wildcards for unknown parts."""
        text = _strip_literal(text)
        m = _TS_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"malformed timestamp {text!r}")
        year, month, day = m.group("year"), m.group("month"), m.group("day")
        values = []
        for part in (year, month, day):
            if part is None or set(part) == {"#"}:
                values.append(None)
            elif "#" in part:
                raise ValueError(f"partially wildcarded component in {text!r}")
            else:
                values.append(int(part))
        y, mo, d = values
        # wildcards must form a suffix: 2009-##-05 has no prefix granularity
        if y is None and (mo is not None or d is not None):
            raise ValueError(f"wildcard year with known month/day in {text!r}")
        if mo is None and d is not None:
            raise ValueError(f"wildcard month with known day in {text!r}")
        if y is None:
            raise ValueError(f"fully wildcarded timestamp {text!r}")
        return cls(y, mo, d)


_TS_RE = re.compile(r"(?P<year>-?[0-9#]+)(?:-(?P<month>[0-9#]{1,2}))?(?:-(?P<day>[0-9#]{1,2}))?")


def _strip_literal(text: str) -> str:
    # tolerate RDF-ish serialisations: "1961-##-##"^^xsd:date, <occursSince>
    text = text.strip()
    if "^^" in text:
        text = text.split("^^", 1)[0]
    return text.strip().strip('"').strip("<>").strip()


@dataclass(frozen=True)
class TemporalFact:
    subject: str
    relation: str
    object: str
    modifier: Modifier = Modifier.NONE
    timestamp: Timestamp | None = None

    def __post_init__(self):
        if self.modifier is not Modifier.NONE and self.timestamp is None:
            raise ValueError("a time modifier requires a timestamp")

    @property
    def has_time(self) -> bool:
        return self.timestamp is not None

    def time_key(self) -> str | None:
        """Timestamp key at the fact's granularity, modifier folded in."""
        if self.timestamp is None:
            return None
        if self.modifier is Modifier.NONE:
            return str(self.timestamp)
        return f"{self.modifier.token}@{self.timestamp}"


def parse_fact_line(line: str, dialect: Dialect | str = Dialect.PLAIN, lineno: int | None = None) -> TemporalFact:
    dialect = Dialect(dialect)
    fields = [f.strip() for f in line.rstrip("\r\n").split("\t")]
    n = len(fields)
    allowed = {
        Dialect.PLAIN: (3, 4, 5),
        Dialect.ICEWS: (4, 5),
        Dialect.YAGO: (3, 5),
        Dialect.WIKIDATA: (5,),
    }[dialect]
    if n not in allowed:
        if dialect is Dialect.YAGO and n == 4 and _modifier_or_none(fields[3]) is not None:
            raise ParseError(f"modifier {fields[3]!r} without timestamp", lineno)
        raise ParseError(f"expected {' or '.join(map(str, allowed))} tab-separated fields, got {n}", lineno)
    if any(not f for f in fields[:3]):
        raise ParseError("empty subject, relation or object", lineno)
    s, p, o = fields[:3]
    modifier = Modifier.NONE
    ts_text = None
    if n == 4:
        mod = _modifier_or_none(fields[3])
        if mod is not None:
            raise ParseError(f"modifier {fields[3]!r} without timestamp", lineno)
        ts_text = fields[3]
    elif n == 5:
        mod = _modifier_or_none(fields[3])
        if mod is None:
            raise ParseError(f"unknown time modifier {fields[3]!r}", lineno)
        modifier = mod
        ts_text = fields[4]

    ts = None
    if ts_text is not None:
        try:
            ts = Timestamp.parse(ts_text)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if dialect is Dialect.ICEWS and ts.granularity != "day":
            raise ParseError(f"ICEWS facts need a full date, got {ts_text!r}", lineno)
        if dialect is Dialect.WIKIDATA and ts.granularity != "year":
            raise ParseError(f"Wikidata facts carry years only, got {ts_text!r}", lineno)
    return TemporalFact(s, p, o, modifier, ts)


def _modifier_or_none(text: str) -> Modifier | None:
    return _MODIFIER_LITERALS.get(_strip_literal(text).lower())


def tokenize_timestamp(ts: Timestamp) -> list[str]:
    if ts.year is None or not 0 <= ts.year <= 9999:
        raise UnsupportedTimestampError(f"year {ts.year} cannot be written with four digits")
    tokens = [f"{c}y" for c in f"{ts.year:04d}"]
    if ts.month is not None:
        tokens.append(f"{ts.month:02d}m")
    if ts.day is not None:
        tokens.extend(f"{c}d" for c in f"{ts.day:02d}")
    return tokens


class TokenVocabulary:
    """Shared token id space: 32 temporal tokens, 2 modifiers, then relations."""

    def __init__(self, relations: Iterable[str]):
        names = list(TEMPORAL_TOKENS) + list(MODIFIER_TOKENS)
        self.temporal_tokens = {t: i for i, t in enumerate(TEMPORAL_TOKENS)}
        off = len(TEMPORAL_TOKENS)
        self.modifier_tokens = {t: off + i for i, t in enumerate(MODIFIER_TOKENS)}
        off += len(MODIFIER_TOKENS)
        rels = sorted(set(relations))
        self.relation_tokens = {r: off + i for i, r in enumerate(rels)}
        self.names = names + rels

    def __len__(self):
        return len(self.names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_tokens)

    def relation_index(self, relation: str) -> int:
        """Dense 0-based relation index (row of a static relation table)."""
        return self.token_id(relation, group="relation") - len(TEMPORAL_TOKENS) - len(MODIFIER_TOKENS)

    def token_id(self, name: str, group: str = "relation") -> int:
        table = {"relation": self.relation_tokens, "modifier": self.modifier_tokens,
                 "temporal": self.temporal_tokens}[group]
        try:
            return table[name]
        except KeyError:
            raise VocabularyError(f"unknown {group} token {name!r}") from None

    def group_of(self, token_id: int) -> str:
        if token_id < len(TEMPORAL_TOKENS):
            return "temporal"
        if token_id < len(TEMPORAL_TOKENS) + len(MODIFIER_TOKENS):
            return "modifier"
        if token_id < len(self.names):
            return "relation"
        raise VocabularyError(f"token id {token_id} out of range")

    def decode(self, token_ids: Sequence[int]) -> list[str]:
        return [self.names[i] for i in token_ids]


def build_predicate_sequence(fact: TemporalFact, vocab: TokenVocabulary) -> tuple[int, ...]:
    ids = [vocab.token_id(fact.relation)]
    if fact.modifier is not Modifier.NONE:
        ids.append(vocab.modifier_tokens[fact.modifier.token])
    if fact.timestamp is not None:
        ids.extend(vocab.temporal_tokens[t] for t in tokenize_timestamp(fact.timestamp))
    return tuple(ids)


def decode_predicate_sequence(seq: Sequence[int], vocab: TokenVocabulary) -> tuple[str, Modifier, Timestamp | None]:
    """Inverse of :func:`build_predicate_sequence`."""
    if not seq or vocab.group_of(seq[0]) != "relation":
        raise ValueError("sequence must start with a relation token")
    relation = vocab.names[seq[0]]
    rest = list(seq[1:])
    modifier = Modifier.NONE
    if rest and vocab.group_of(rest[0]) == "modifier":
        modifier = Modifier.SINCE if vocab.names[rest.pop(0)] == "since" else Modifier.UNTIL
    names = vocab.decode(rest)
    if not names:
        return relation, modifier, None
    if len(names) < 4 or not all(n.endswith("y") for n in names[:4]):
        raise ValueError(f"malformed temporal tokens {names}")
    year = int("".join(n[0] for n in names[:4]))
    month = day = None
    if len(names) > 4:
        month = int(names[4][:2])
    if len(names) > 5:
        day = int("".join(n[0] for n in names[5:7]))
    return relation, modifier, Timestamp(year, month, day)


@dataclass(frozen=True)
class Split:
    facts: tuple[TemporalFact, ...]
    subjects: "object"  # np.ndarray[int]
    objects: "object"
    sequences: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.facts)


@dataclass(frozen=True)
class DatasetBundle:
    train: Split
    valid: Split
    test: Split
    entities: tuple[str, ...]
    entity_vocab: dict
    token_vocab: TokenVocabulary
    filter_index: frozenset
    timestamp_keys: tuple[str, ...] = field(default=())

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    def split(self, name: str) -> Split:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def statistics(self) -> dict:
        return dataset_statistics(self)


SPLIT_NAMES = ("train", "valid", "test")


def read_facts(path: str | os.PathLike, dialect: Dialect | str = Dialect.PLAIN) -> list[TemporalFact]:
    facts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                fact = parse_fact_line(line, dialect, lineno)
                if fact.timestamp is not None:
                    tokenize_timestamp(fact.timestamp)
            except ParseError as exc:
                raise ParseError(exc.message, exc.lineno, str(path)) from None
            except UnsupportedTimestampError as exc:
                raise ParseError(str(exc), lineno, str(path)) from None
            facts.append(fact)
    return facts


def load_dataset(train_path, valid_path, test_path, dialect: Dialect | str = Dialect.PLAIN) -> DatasetBundle:
    raw = {}
    for name, path in zip(SPLIT_NAMES, (train_path, valid_path, test_path)):
        raw[name] = read_facts(path, dialect)
    if not raw["train"]:
        raise DataError(f"training file {train_path} contains no facts")
    return build_dataset(raw["train"], raw["valid"], raw["test"])


def build_dataset(train: Sequence[TemporalFact], valid: Sequence[TemporalFact],
                  test: Sequence[TemporalFact]) -> DatasetBundle:
    import numpy as np

    if not train:
        raise DataError("empty training split")
    all_facts = list(train) + list(valid) + list(test)
    entities = tuple(sorted({f.subject for f in all_facts} | {f.object for f in all_facts}))
    entity_vocab = {e: i for i, e in enumerate(entities)}
    vocab = TokenVocabulary(f.relation for f in all_facts)

    splits = {}
    index = set()
    for name, facts in zip(SPLIT_NAMES, (train, valid, test)):
        seqs = tuple(build_predicate_sequence(f, vocab) for f in facts)
        s = np.array([entity_vocab[f.subject] for f in facts], dtype=np.int64)
        o = np.array([entity_vocab[f.object] for f in facts], dtype=np.int64)
        for si, q, oi in zip(s.tolist(), seqs, o.tolist()):
            index.add((si, q, oi))
        splits[name] = Split(tuple(facts), s, o, seqs)

    ts_keys = tuple(sorted({f.time_key() for f in train if f.has_time}))
    return DatasetBundle(splits["train"], splits["valid"], splits["test"], entities,
                         entity_vocab, vocab, frozenset(index), ts_keys)


def dataset_statistics(bundle: DatasetBundle) -> dict:
    stats = {
        "entities": bundle.num_entities,
        "relations": bundle.token_vocab.num_relations,
        "splits": {},
    }
    all_ts = set()
    total = total_timed = 0
    for name in SPLIT_NAMES:
        facts = bundle.split(name).facts
        timed = [f for f in facts if f.has_time]
        ts = {f.timestamp for f in timed}
        all_ts |= ts
        stats["splits"][name] = {"facts": len(facts), "facts_with_time": len(timed),
                                 "distinct_timestamps": len(ts)}
        total += len(facts)
        total_timed += len(timed)
    stats["facts"] = total
    stats["facts_with_time"] = total_timed
    stats["distinct_timestamps"] = len(all_ts)
    years = [t.year for t in all_ts]
    stats["time_span"] = [min(years), max(years)] if years else None
    return stats


def format_statistics(stats: dict) -> str:
    """Render statistics as tab-separated ``scope  metric  value`` lines."""
    lines = ["scope\tmetric\tvalue"]
    for key in ("entities", "relations", "facts", "facts_with_time", "distinct_timestamps"):
        lines.append(f"all\t{key}\t{stats[key]}")
    if stats.get("time_span"):
        lo, hi = stats["time_span"]
        lines.append(f"all\ttime_span\t{lo}-{hi}")
    for name, row in stats["splits"].items():
        for key, value in row.items():
            lines.append(f"{name}\t{key}\t{value}")
    return "\n".join(lines)


_SPLIT_SUFFIXES = {"train": ("train",), "valid": ("valid", "val", "dev"), "test": ("test",)}


def find_split_files(directory: str | os.PathLike) -> tuple[str, str, str]:
    """Locate train/valid/test files in ``directory`` by name."""
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise DataError(f"{directory} is not a directory")
    entries = sorted(os.listdir(directory))
    found = []
    for split in SPLIT_NAMES:
        hits = [e for e in entries
                if os.path.isfile(os.path.join(directory, e))
                and any(re.search(rf"(^|[_.\-]){suf}([_.\-]|$)", e) for suf in _SPLIT_SUFFIXES[split])]
        if len(hits) != 1:
            raise DataError(
                f"{directory}: expected exactly one {split} file (e.g. train.txt, valid.txt, test.txt "
                f"or <name>_train.txt, <name>_valid.txt, <name>_test.txt), found {hits or 'none'}")
        found.append(os.path.join(directory, hits[0]))
    return tuple(found)


# Reference statistics of the four published temporal KGs.  Split rows are
# (all facts, facts carrying time).
PUBLISHED_STATISTICS = {
    "yago15k": {"entities": 15403, "relations": 34, "facts": 138056, "distinct_timestamps": 198,
                "time_span": [1513, 2017], "dialect": Dialect.YAGO,
                "splits": {"train": (110441, 29381), "valid": (13815, 3635), "test": (13800, 3685)}},
    "icews14": {"entities": 6869, "relations": 230, "facts": 96730, "distinct_timestamps": 365,
                "time_span": [2014, 2014], "dialect": Dialect.ICEWS,
                "splits": {"train": (72826, 72826), "valid": (8941, 8941), "test": (8963, 8963)}},
    "icews05-15": {"entities": 10094, "relations": 251, "facts": 461329, "distinct_timestamps": 4017,
                   "time_span": [2005, 2015], "dialect": Dialect.ICEWS,
                   "splits": {"train": (368962, 368962), "valid": (46275, 46275), "test": (46092, 46092)}},
    "wikidata": {"entities": 11134, "relations": 95, "facts": 150079, "distinct_timestamps": 328,
                 "time_span": [25, 2020], "dialect": Dialect.WIKIDATA,
                 "splits": {"train": (121422, 121422), "valid": (14374, 14374), "test": (14283, 14283)}},
}


def compare_statistics(stats: dict, name: str) -> list[str]:
    """Differences between ``stats`` and the published figures for ``name``."""
    ref = PUBLISHED_STATISTICS[name]
    problems = []
    for key in ("entities", "relations", "facts", "distinct_timestamps", "time_span"):
        if stats.get(key) != ref[key]:
            problems.append(f"{key}: got {stats.get(key)}, expected {ref[key]}")
    for split, (n, n_time) in ref["splits"].items():
        row = stats["splits"][split]
        if row["facts"] != n:
            problems.append(f"{split} facts: got {row['facts']}, expected {n}")
        if row["facts_with_time"] != n_time:
            problems.append(f"{split} facts_with_time: got {row['facts_with_time']}, expected {n_time}")
    return problems
