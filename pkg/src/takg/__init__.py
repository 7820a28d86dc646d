"""Time-aware representations for temporal knowledge-graph link prediction."""

from .data import (DatasetBundle, Dialect, Modifier, TemporalFact, Timestamp, TokenVocabulary,
                   build_predicate_sequence, load_dataset, parse_fact_line, tokenize_timestamp)
from .evaluation import RankingReport, evaluate_split
from .scoring import SCORERS, Model
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle", "Dialect", "Modifier", "TemporalFact", "Timestamp", "TokenVocabulary",
    "build_predicate_sequence", "load_dataset", "parse_fact_line", "tokenize_timestamp",
    "RankingReport", "evaluate_split", "SCORERS", "Model", "TrainConfig", "train",
]
