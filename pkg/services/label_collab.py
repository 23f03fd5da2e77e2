"""SimHash retrieval over a sliding pool of recent training sessions.

Fingerprints are packed into uint64 words; hamming distance is XOR plus
popcount, so retrieval never touches embedding vectors.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from models import RetrievalConfig, SoftLabel
from utils.errors import ConfigError, ShapeError
from utils.logging import get_logger

logger = get_logger(__name__)

WORD_BITS = 64


class HashProjector:
    """Frozen standard-normal projection (dim x num_bits) from a fixed seed."""

    def __init__(self, dim: int, num_bits: int = 64, seed: int = 7):
        if num_bits >= dim:
            raise ConfigError(f"hash_dim ({num_bits}) must be smaller than dim ({dim})")
        self.dim = dim
        self.num_bits = num_bits
        self.seed = seed
        self.matrix = np.random.default_rng(seed).standard_normal((dim, num_bits))

    @property
    def num_words(self) -> int:
        return (self.num_bits + WORD_BITS - 1) // WORD_BITS

    def bits(self, vectors: np.ndarray) -> np.ndarray:
        """Sign bits, shape (n, num_bits); an exact zero maps to 0."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.dim:
            raise ShapeError(f"fingerprint: expected vectors of width {self.dim}, got {vectors.shape}")
        return (vectors @ self.matrix) > 0


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(n, m) booleans -> (n, ceil(m/64)) uint64 words, bit k of a row at word k//64."""
    bits = np.atleast_2d(bits)
    n, m = bits.shape
    words = (m + WORD_BITS - 1) // WORD_BITS
    padded = np.zeros((n, words * WORD_BITS), dtype=bool)
    padded[:, :m] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64)


def unpack_bits(words: np.ndarray, num_bits: int) -> np.ndarray:
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :num_bits].astype(bool)


def fingerprint(vectors: np.ndarray, projector: HashProjector) -> np.ndarray:
    """Packed fingerprints of detached session vectors, one row per vector."""
    return pack_bits(projector.bits(vectors))


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Number of differing bits; broadcasts over leading axes."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"hamming: fingerprint widths differ {a.shape} vs {b.shape}")
    return np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)


class CandidatePool:
    """Fixed-capacity ring buffer of (fingerprint, target) records."""

    def __init__(self, capacity: int, num_words: int = 1):
        if capacity < 1:
            raise ConfigError("pool_size must be >= 1")
        self.capacity = capacity
        self.num_words = num_words
        self.fingerprints = np.zeros((capacity, num_words), dtype=np.uint64)
        self.targets = np.zeros(capacity, dtype=np.int64)
        self.stamps = np.zeros(capacity, dtype=np.int64)
        self.head = 0
        self.size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def push(self, fingerprints: np.ndarray, targets: Sequence[int]):
        """Append records in order, overwriting the oldest when full."""
        fingerprints = np.atleast_2d(np.asarray(fingerprints, dtype=np.uint64))
        targets = np.asarray(targets, dtype=np.int64)
        if fingerprints.shape != (targets.shape[0], self.num_words):
            raise ShapeError(
                f"pool push: fingerprints {fingerprints.shape} do not match "
                f"{targets.shape[0]} targets of {self.num_words} word(s)"
            )
        for fp, target in zip(fingerprints, targets):
            self.fingerprints[self.head] = fp
            self.targets[self.head] = target
            self.stamps[self.head] = self.pushed
            self.pushed += 1
            self.head = (self.head + 1) % self.capacity
            if self.size < self.capacity:
                self.size += 1

    def records(self) -> Tuple[np.ndarray, np.ndarray]:
        """(fingerprints, targets) oldest first."""
        order = np.argsort(self.stamps[: self.size], kind="stable")
        return self.fingerprints[: self.size][order], self.targets[: self.size][order]


def retrieve(
    pool: CandidatePool, query: np.ndarray, k: int, num_bits: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Targets and normalized weights of the k closest records.

    Closest by hamming distance, newer first on ties. Raw weight is
    ``num_bits - distance``; all-zero raw weights become uniform.
    """
    if pool.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    query = np.asarray(query, dtype=np.uint64).reshape(-1)
    fps = pool.fingerprints[: pool.size]
    dist = hamming(fps, query[None, :])
    order = np.lexsort((-pool.stamps[: pool.size], dist))[:k]
    raw = (num_bits - dist[order]).astype(np.float64)
    total = raw.sum()
    weights = raw / total if total > 0 else np.full(order.size, 1.0 / order.size)
    return pool.targets[: pool.size][order], weights


def soft_label(targets: Sequence[int], weights: Sequence[float]) -> SoftLabel:
    """Weighted one-hot mixture; duplicate targets add up."""
    probs = {}
    for target, weight in zip(targets, weights):
        probs[int(target)] = probs.get(int(target), 0.0) + float(weight)
    return SoftLabel(probs=probs)


def pool_update(pool: CandidatePool, fingerprints: np.ndarray, targets: Sequence[int]) -> CandidatePool:
    pool.push(fingerprints, targets)
    return pool


class LabelCollaborator:
    """Projector plus pool; retrieval for a batch happens before its records are added."""

    def __init__(self, config: RetrievalConfig, dim: int):
        self.config = config
        self.projector = HashProjector(dim, config.hash_dim, config.hash_seed)
        self.pool = CandidatePool(config.pool_size, self.projector.num_words)

    def soft_labels(self, session_vectors: np.ndarray) -> Tuple[np.ndarray, List[Optional[SoftLabel]]]:
        """Fingerprints of the batch and one soft label per session (None on a cold pool)."""
        fps = fingerprint(session_vectors, self.projector)
        if self.pool.size == 0:
            return fps, [None] * fps.shape[0]
        labels = []
        for fp in fps:
            targets, weights = retrieve(self.pool, fp, self.config.retrieve_k, self.projector.num_bits)
            labels.append(soft_label(targets, weights))
        return fps, labels

    def update(self, fingerprints: np.ndarray, targets: Sequence[int]):
        pool_update(self.pool, fingerprints, targets)
