"""Acceptance gate: one PASS/FAIL line per criterion (see the summary section).

Criteria that need the published temporal KGs read them from
``$TAKG_DATA_ROOT/<dataset>/`` (default ``<repo>/data``).  When the files
are absent those criteria fail rather than skip: the check was not met.
The full-budget reproduction is opt-in via ``TAKG_RUN_REPRODUCTION=1``.
"""
import os
import re
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from takg import toy
from takg.data import (
    PUBLISHED_STATISTICS,
    TEMPORAL_TOKENS,
    DataError,
    Modifier,
    TemporalFact,
    Timestamp,
    TokenVocabulary,
    build_predicate_sequence,
    compare_statistics,
    dataset_statistics,
    find_split_files,
    load_dataset,
)
from takg.evaluation import evaluate_split
from takg.scoring import SCORERS
from takg.training import TrainConfig, select_dropout, train

DATA_ROOT = Path(os.environ.get("TAKG_DATA_ROOT", Path(__file__).resolve().parents[1] / "data"))


def find_dataset(name):
    """Directory under DATA_ROOT whose name matches ``name`` ignoring case and punctuation."""
    want = re.sub(r"[^a-z0-9]", "", name.lower())
    if DATA_ROOT.is_dir():
        for entry in sorted(DATA_ROOT.iterdir()):
            if entry.is_dir() and re.sub(r"[^a-z0-9]", "", entry.name.lower()) == want:
                return entry
    return None


def load_published(name):
    directory = find_dataset(name)
    if directory is None:
        raise DataError(f"no {name} directory under {DATA_ROOT}")
    return load_dataset(*find_split_files(directory), dialect=PUBLISHED_STATISTICS[name]["dialect"])


# ------------------------------------------------------------ tokenizer

def test_tokenizer_goldens(criterion):
    t0 = time.perf_counter()
    vocab = TokenVocabulary(["country", "born", "president"])
    rows = [
        (TemporalFact("BarackObama", "country", "US"), ["country"]),
        (TemporalFact("BarackObama", "born", "US", Modifier.NONE, Timestamp(1961)),
         ["born", "1y", "9y", "6y", "1y"]),
        (TemporalFact("BarackObama", "president", "US", Modifier.SINCE, Timestamp(2009, 1)),
         ["president", "since", "2y", "0y", "0y", "9y", "01m"]),
    ]
    ok = all(vocab.decode(build_predicate_sequence(f, vocab)) == want for f, want in rows)
    ok = ok and len(TEMPORAL_TOKENS) == 32 and len(vocab.temporal_tokens) == 32
    elapsed = time.perf_counter() - t0
    criterion("tokenizer goldens and 32-token temporal alphabet", ok and elapsed < 1.0,
              f"{elapsed * 1000:.1f} ms")


# -------------------------------------------------------- dataset stats

@pytest.mark.parametrize("name", sorted(PUBLISHED_STATISTICS))
def test_dataset_cross_check(name, criterion):
    label = f"dataset cross-check {name}"
    t0 = time.perf_counter()
    try:
        bundle = load_published(name)
    except DataError as exc:
        criterion(label, False, f"data unavailable: {exc}")
    problems = compare_statistics(dataset_statistics(bundle), name)
    elapsed = time.perf_counter() - t0
    detail = "; ".join(problems) if problems else f"exact match, {elapsed:.1f} s"
    criterion(label, not problems and elapsed < 30.0, detail)


# ------------------------------------------------------------ gradients

def test_gradient_suite(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240501)
    worst = {}
    for name in oracles.PRIMITIVE_CASES:
        worst[name] = max(oracles.check_primitive(name, rng) for _ in range(100))
    for scorer in SCORERS:
        worst[f"{scorer} loss"] = max(oracles.check_model_loss(scorer, rng) for _ in range(100))
    elapsed = time.perf_counter() - t0
    name, err = max(worst.items(), key=lambda kv: kv[1])
    criterion("gradient suite (100 cases per primitive and per scorer loss)",
              err < 1e-4 and elapsed < 60.0,
              f"max relative error {err:.2e} at {name}, {elapsed:.1f} s")


# ---------------------------------------------------- ranking vs oracle

def test_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    problems, scorers = [], set()
    for _ in range(50):
        bundle, model, time_aware = oracles.random_ranking_case(rng)
        scorers.add(model.scorer)
        problems += oracles.compare_with_oracle(bundle, model, time_aware)
    elapsed = time.perf_counter() - t0
    detail = problems[0] if problems else f"50 cases, scorers {sorted(scorers)}, {elapsed:.1f} s"
    criterion("ranking equals brute-force oracle (raw and filtered)", not problems and elapsed < 60.0, detail)


# -------------------------------------------------------------- overfit

OVERFIT = dict(d=16, lr=0.01, batch_size=10, num_negatives=20, max_epochs=200, seed=0)


@pytest.mark.parametrize("scorer", SCORERS)
def test_overfit_sanity(scorer, criterion):
    t0 = time.perf_counter()
    bundle = toy.bundle(toy.overfit_facts())
    state = train(bundle, TrainConfig(scorer=scorer, **OVERFIT), validator=None, log_sink=lambda r: None)
    mrr = evaluate_split(state.model, bundle, "train", setting="filtered").mrr("filtered")
    elapsed = time.perf_counter() - t0
    criterion(f"overfit sanity {scorer}", mrr >= 0.95 and elapsed < 120.0,
              f"filtered MRR {mrr:.3f} after {state.epoch} epochs, {elapsed:.1f} s")


# ------------------------------------------------------ time-only toy KG

def test_time_aware_loss_below_static(criterion):
    t0 = time.perf_counter()
    bundle = toy.bundle(toy.time_only_facts())
    cfg = dict(d=16, lr=0.01, batch_size=10, num_negatives=20, max_epochs=100, seed=0)
    final = {}
    for scorer in ("ta_transe", "transe"):
        state = train(bundle, TrainConfig(scorer=scorer, **cfg), validator=None, log_sink=lambda r: None)
        final[scorer] = state.epoch_losses[-1]
    elapsed = time.perf_counter() - t0
    criterion("time-only toy KG: TA-TransE final loss below TransE",
              final["ta_transe"] < final["transe"] and elapsed < 120.0,
              f"TA-TransE {final['ta_transe']:.3f} vs TransE {final['transe']:.3f}, {elapsed:.1f} s")


# ------------------------------------------------- desk-scale ICEWS 2014

def test_desk_scale_icews14(criterion):
    label = "desk-scale ICEWS14: TA-DistMult filtered MRR >= DistMult + 1.0"
    try:
        bundle = load_published("icews14")
    except DataError as exc:
        criterion(label, False, f"data unavailable: {exc}")
    mrr = {}
    for scorer in ("ta_distmult", "distmult"):
        cfg = TrainConfig(scorer=scorer, d=50, max_epochs=50, num_negatives=50, validate_every=10, seed=0)
        state = train(bundle, cfg, log_sink=lambda r: None)
        mrr[scorer] = 100 * evaluate_split(state.model, bundle, "test", setting="filtered").mrr("filtered")
    gap = mrr["ta_distmult"] - mrr["distmult"]
    criterion(label, gap >= 1.0,
              f"TA-DistMult {mrr['ta_distmult']:.1f} vs DistMult {mrr['distmult']:.1f}, gap {gap:+.1f}")


# --------------------------------------------------- full reproduction

@pytest.mark.reproduction
@pytest.mark.slow
def test_full_reproduction(criterion):
    label = "full reproduction (ICEWS14 TA-DistMult, YAGO15k TA-TransE)"
    if os.environ.get("TAKG_RUN_REPRODUCTION") != "1":
        criterion.skip(label, "opt-in: set TAKG_RUN_REPRODUCTION=1")
    targets = [("icews14", "ta_distmult", {"mrr": 47.7, "hits@10": 68.6}),
               ("yago15k", "ta_transe", {"mrr": 32.1})]
    details, ok = [], True
    for name, scorer, want in targets:
        try:
            bundle = load_published(name)
        except DataError as exc:
            criterion(label, False, f"data unavailable: {exc}")
        state, cfg = select_dropout(bundle, TrainConfig(scorer=scorer), (0.0, 0.4))
        got = evaluate_split(state.model, bundle, "test", setting="filtered").metrics("filtered")
        for metric, target in want.items():
            value = 100 * got[metric]
            ok = ok and abs(value - target) <= 2.0
            details.append(f"{name} {scorer} {metric} {value:.1f} (target {target})")
    criterion(label, ok, "; ".join(details))
