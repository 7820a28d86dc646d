import json

import numpy as np
import pytest

import oracles
from takg import toy
from takg.autodiff import Parameter
from takg.data import TemporalFact, Timestamp, build_dataset
from takg.evaluation import (
    EvaluationError,
    RankingReport,
    build_filter_maps,
    evaluate_split,
    metrics,
    rank_entity,
    rank_from_scores,
)
from takg.scoring import SCORERS, Model


def test_best_candidate_has_rank_one():
    assert rank_from_scores(np.array([0.1, 0.9, 0.3]), 1) == 1.0


def test_all_equal_scores_take_the_mean_rank():
    assert rank_from_scores(np.zeros(5), 2) == 3.0


def test_filtered_candidates_are_skipped():
    plaus = np.array([5.0, 4.0, 3.0, 2.0])
    assert rank_from_scores(plaus, 3) == 4.0
    assert rank_from_scores(plaus, 3, exclude={0, 1, 3}) == 2.0


def test_metric_arithmetic():
    m = metrics([1, 10])
    assert m["mr"] == 5.5
    assert m["mrr"] == pytest.approx(0.55)
    assert m["hits@10"] == 1.0
    assert m["hits@1"] == 0.5
    assert m["hits@3"] == 0.5


def test_report_scales_to_percent():
    r = RankingReport({("filtered", "subject"): np.array([1.0]), ("filtered", "object"): np.array([10.0])})
    table = r.format_table()
    assert "55.0" in table and "100.0" in table
    assert r.mrr() == pytest.approx(0.55)


def test_oracle_equivalence_over_random_cases():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        bundle, model, time_aware = oracles.random_ranking_case(rng)
        assert oracles.compare_with_oracle(bundle, model, time_aware) == []


@pytest.mark.parametrize("scorer", SCORERS)
def test_filtered_never_worse_than_raw(scorer, split_bundle, rng):
    model = Model.for_dataset(scorer, split_bundle, 6, rng)
    report = evaluate_split(model, split_bundle, "test")
    for side in ("subject", "object"):
        assert np.all(report.ranks[("filtered", side)] <= report.ranks[("raw", side)])


def two_times_bundle():
    # the same (s, r, o) at two timestamps plus a competing object
    facts = [TemporalFact("a", "r", "b", timestamp=Timestamp(2000)),
             TemporalFact("a", "r", "c", timestamp=Timestamp(2001)),
             TemporalFact("d", "r", "b")]
    return build_dataset(facts[:1] + facts[2:], [], facts[1:2])


def test_time_aware_filter_distinguishes_timestamps():
    bundle = two_times_bundle()
    model = Model.for_dataset("distmult", bundle, 2, np.random.default_rng(0))
    E = np.array([[1.0, 0.0], [3.0, 0.0], [2.0, 0.0], [0.0, 1.0]])  # a, b, c, d
    model.entity_table = Parameter("entity", E)
    model.relation_table = Parameter("relation", np.array([[1.0, 0.0]]))
    aware = evaluate_split(model, bundle, "test", time_aware_filter=True)
    agnostic = evaluate_split(model, bundle, "test", time_aware_filter=False)
    # b outscores c; only the time-agnostic filter removes it as a known answer
    assert aware.ranks[("filtered", "object")].tolist() == [2.0]
    assert agnostic.ranks[("filtered", "object")].tolist() == [1.0]
    assert aware.ranks[("raw", "object")].tolist() == [2.0]


def test_filter_maps():
    maps = build_filter_maps({(0, (40, 1), 2), (0, (40, 2), 3)}, time_aware=True)
    assert maps.known("object", 0, (40, 1), 9) == {2}
    agnostic = build_filter_maps({(0, (40, 1), 2), (0, (40, 2), 3)}, time_aware=False)
    assert agnostic.known("object", 0, (40, 7), 9) == {2, 3}
    assert agnostic.known("subject", 5, (40,), 3) == {0}


@pytest.mark.parametrize("scorer", SCORERS)
def test_cache_and_workers_do_not_change_ranks(scorer, split_bundle, rng):
    model = Model.for_dataset(scorer, split_bundle, 5, rng)
    base = evaluate_split(model, split_bundle, "test")
    for kwargs in ({"cache": False}, {"workers": 3}, {"cache": False, "workers": 2}):
        other = evaluate_split(model, split_bundle, "test", **kwargs)
        for k in base.ranks:
            assert np.array_equal(base.ranks[k], other.ranks[k]), (kwargs, k)


def test_chunking_does_not_change_ranks(split_bundle, rng):
    from takg.evaluation import compute_ranks
    from takg.scoring import fact_arrays

    model = Model.for_dataset("ta_distmult", split_bundle, 5, rng)
    arrays = fact_arrays(split_bundle.test, split_bundle.token_vocab)
    filters = build_filter_maps(split_bundle.filter_index)
    a = compute_ranks(model, arrays, filters)
    b = compute_ranks(model, arrays, filters, chunk_size=1)
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_rank_entity_matches_report(split_bundle, rng):
    model = Model.for_dataset("ta_transe", split_bundle, 4, rng)
    filters = build_filter_maps(split_bundle.filter_index)
    report = evaluate_split(model, split_bundle, "test", filters=filters)
    test = split_bundle.test
    for i in range(len(test)):
        s, o, seq = int(test.subjects[i]), int(test.objects[i]), test.sequences[i]
        assert rank_entity(model, s, seq, o, "object", filters) == report.ranks[("filtered", "object")][i]
        assert rank_entity(model, s, seq, o, "subject") == report.ranks[("raw", "subject")][i]


def test_rank_entity_errors(split_bundle, rng):
    model = Model.for_dataset("transe", split_bundle, 4, rng)
    seq = split_bundle.test.sequences[0]
    with pytest.raises(EvaluationError):
        rank_entity(model, 0, seq, model.num_entities, "object")
    with pytest.raises(ValueError):
        rank_entity(model, 0, seq, 1, "relation")


def test_setting_selection(split_bundle, rng):
    model = Model.for_dataset("transe", split_bundle, 4, rng)
    assert evaluate_split(model, split_bundle, setting="raw").settings == ["raw"]
    assert evaluate_split(model, split_bundle, setting="filtered").settings == ["filtered"]
    with pytest.raises(ValueError):
        evaluate_split(model, split_bundle, setting="both-ish")


def test_empty_split_and_size_mismatch(rng):
    bundle = toy.bundle(toy.overfit_facts(n_facts=10))
    model = Model.for_dataset("transe", bundle, 4, rng)
    with pytest.raises(EvaluationError):
        evaluate_split(model, bundle, "test")
    other = toy.bundle(toy.overfit_facts(n_facts=10), [], toy.overfit_facts(n_facts=3, n_entities=60, seed=9))
    with pytest.raises(EvaluationError):
        evaluate_split(model, other, "test")


def test_report_serialisation(split_bundle, rng):
    model = Model.for_dataset("distmult", split_bundle, 4, rng)
    report = evaluate_split(model, split_bundle, "test")
    tsv = report.to_tsv().splitlines()
    assert tsv[0] == "split\tscorer\tsetting\tdirection\tmetric\tvalue"
    assert len(tsv) == 1 + 2 * 3 * 5
    rows = json.loads(report.to_json())["metrics"]
    assert {r["metric"] for r in rows} == {"mr", "mrr", "hits@1", "hits@3", "hits@10"}
    per_query = report.per_query_tsv().splitlines()
    assert len(per_query) == 1 + 4 * len(split_bundle.test)
