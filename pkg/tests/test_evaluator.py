import numpy as np
import pytest

from models import Session
from services.evaluator import (
    evaluate,
    evaluate_popularity,
    metrics_from_ranks,
    popularity_scores,
    rank_target,
    rank_targets,
    recommend,
)
from utils.errors import DatasetError


def test_metrics_reference_fixture():
    p, mrr = metrics_from_ranks([1, 4, 25], cutoff=20)
    assert p == pytest.approx(0.666667, abs=1e-6)
    assert mrr == pytest.approx(0.416667, abs=1e-6)


def test_metrics_all_misses():
    assert metrics_from_ranks([21, 50], cutoff=20) == (0.0, 0.0)


def test_metrics_empty_is_fatal():
    with pytest.raises(DatasetError):
        metrics_from_ranks([])


def test_rank_is_one_based():
    scores = np.array([0.1, 0.9, 0.5])
    assert rank_target(scores, 1) == 1
    assert rank_target(scores, 0) == 3


def test_ties_rank_pessimistically():
    scores = np.array([0.5, 0.5, 0.5, 0.1])
    assert rank_target(scores, 0) == 3
    assert rank_target(scores, 3) == 4


def test_row_ranks_match_scalar_ranks():
    rng = np.random.default_rng(0)
    scores = rng.integers(0, 5, size=(20, 12)).astype(np.float64)
    targets = rng.integers(0, 12, size=20)
    expected = [rank_target(row, t) for row, t in zip(scores, targets)]
    assert list(rank_targets(scores, targets)) == expected


def test_ranks_survive_monotone_transform():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((10, 30))
    targets = rng.integers(0, 30, size=10)
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_array_equal(rank_targets(logits, targets), rank_targets(probs, targets))
    np.testing.assert_array_equal(rank_targets(logits, targets), rank_targets(3 * logits + 1, targets))


def test_evaluate_report(micro_model, micro_corpus):
    sessions, _ = micro_corpus
    report = evaluate(micro_model, sessions, cutoff=20, batch_size=5, keep_ranks=True)
    assert report.n_cases == len(sessions)
    assert len(report.ranks) == len(sessions)
    assert all(1 <= r <= 30 for r in report.ranks)
    p, mrr = metrics_from_ranks(report.ranks, 20)
    assert (report.p_at_k, report.mrr_at_k) == (p, mrr)
    assert set(report.to_record()) == {"n", "p_at_20", "mrr_at_20"}


def test_evaluate_independent_of_threads_and_batching(micro_model, micro_corpus):
    sessions, _ = micro_corpus
    one = evaluate(micro_model, sessions, batch_size=3, threads=1, keep_ranks=True)
    many = evaluate(micro_model, sessions, batch_size=3, threads=4, keep_ranks=True)
    assert one.ranks == many.ranks


def test_evaluate_empty_test_set(micro_model):
    with pytest.raises(DatasetError):
        evaluate(micro_model, [])


def test_popularity_baseline():
    train = [Session([0, 1], 1), Session([1, 2], 1)]
    scores = popularity_scores(train, 4)
    assert list(scores) == [1, 4, 1, 0]
    report = evaluate_popularity(train, [Session([0], 1), Session([0], 2), Session([0], 3)], 4, cutoff=2, keep_ranks=True)
    # item 2 ties item 0, so it ranks behind it
    assert report.ranks == [1, 3, 4]
    assert report.p_at_k == pytest.approx(1 / 3)


def test_recommend_returns_sorted_distribution(micro_model):
    top = recommend(micro_model, [1, 2, 3], k=5)
    assert len(top) == 5
    probs = [p for _, p in top]
    assert probs == sorted(probs, reverse=True)
    everything = recommend(micro_model, [1, 2, 3], k=100)
    assert len(everything) == 30
    assert sum(p for _, p in everything) == pytest.approx(1.0, abs=1e-6)
    assert [i for i, _ in everything[:5]] == [i for i, _ in top]
