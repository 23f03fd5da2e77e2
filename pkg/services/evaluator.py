"""Full-catalog ranking metrics."""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np

from models import EvalReport, Session
from services.model import CaresModel
from utils.errors import DatasetError
from utils.logging import get_logger

logger = get_logger(__name__)


def rank_target(scores: np.ndarray, target: int) -> int:
    """1-based rank; items tied with the target count as ahead of it."""
    scores = np.asarray(scores)
    return int((scores >= scores[target]).sum())


def rank_targets(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-wise ``rank_target`` for a (B, m) score matrix."""
    targets = np.asarray(targets, dtype=np.int64)
    target_scores = scores[np.arange(scores.shape[0]), targets]
    return (scores >= target_scores[:, None]).sum(axis=1).astype(np.int64)


def metrics_from_ranks(ranks: Sequence[int], cutoff: int = 20) -> Tuple[float, float]:
    """(P@cutoff, MRR@cutoff)."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise DatasetError("cannot evaluate an empty test set")
    hit = ranks <= cutoff
    return float(hit.mean()), float(np.where(hit, 1.0 / ranks, 0.0).mean())


def _batches(samples: Sequence[Session], size: int) -> List[Sequence[Session]]:
    return [samples[i:i + size] for i in range(0, len(samples), size)]


def evaluate(
    model: CaresModel,
    samples: Sequence[Session],
    cutoff: int = 20,
    batch_size: int = 100,
    threads: int = 1,
    keep_ranks: bool = False,
) -> EvalReport:
    """Rank every test target against the full catalog.

    Ranks come from the logits, a strictly monotone transform of the softmax.
    Batches are independent, so they may be scored on several threads; the
    result does not depend on the thread count.
    """
    if not samples:
        raise DatasetError("cannot evaluate an empty test set")
    batches = _batches(list(samples), batch_size)

    def score_batch(batch: Sequence[Session]) -> np.ndarray:
        targets = np.array([s.target for s in batch], dtype=np.int64)
        return rank_targets(model.score(batch), targets)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(score_batch, batches))
    else:
        parts = [score_batch(b) for b in batches]

    ranks = np.concatenate(parts)
    p, mrr = metrics_from_ranks(ranks, cutoff)
    logger.info(f"Evaluated {ranks.size} cases: P@{cutoff}={p:.4f} MRR@{cutoff}={mrr:.4f}")
    return EvalReport(
        n_cases=int(ranks.size),
        p_at_k=p,
        mrr_at_k=mrr,
        cutoff=cutoff,
        ranks=ranks.tolist() if keep_ranks else None,
    )


def popularity_scores(train: Sequence[Session], num_items: int) -> np.ndarray:
    """Click counts over the full train sequences."""
    clicks = [v for s in train for v in s.sequence]
    return np.bincount(np.asarray(clicks, dtype=np.int64), minlength=num_items).astype(np.float64)


def evaluate_popularity(
    train: Sequence[Session],
    samples: Sequence[Session],
    num_items: int,
    cutoff: int = 20,
    keep_ranks: bool = False,
) -> EvalReport:
    """The same ranking metrics for a model that always ranks by popularity."""
    if not samples:
        raise DatasetError("cannot evaluate an empty test set")
    scores = popularity_scores(train, num_items)
    targets = np.array([s.target for s in samples], dtype=np.int64)
    ordered = np.sort(scores)
    ranks = num_items - np.searchsorted(ordered, scores[targets], side="left")
    p, mrr = metrics_from_ranks(ranks, cutoff)
    return EvalReport(
        n_cases=int(ranks.size),
        p_at_k=p,
        mrr_at_k=mrr,
        cutoff=cutoff,
        ranks=ranks.tolist() if keep_ranks else None,
    )


def recommend(
    model: CaresModel, items: Sequence[int], k: int
) -> List[Tuple[int, float]]:
    """Top-k (item id, softmax probability), ties by ascending id."""
    logits = model.score([Session(items=list(items))])[0].astype(np.float64)
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    order = np.lexsort((np.arange(probs.size), -probs))[:k]
    return [(int(i), float(probs[i])) for i in order]
