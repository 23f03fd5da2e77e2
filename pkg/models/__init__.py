from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np


class Precision(Enum):
    """Float width used by the tensor library."""

    FLOAT32 = "float32"
    FLOAT64 = "float64"


class FallbackRelation(Enum):
    """Relations assigned to category pairs outside the named top-Q."""

    SAME = "same"
    DRIFT = "drift"
    SELF = "self"


# ---------------------------------------------------------------------------
# Session data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawEvent:
    """One click from the raw log."""

    session_key: str
    timestamp: int
    item_key: str
    category_key: str


@dataclass
class ColumnMapping:
    """Where each mandatory field lives in a delimited log."""

    session: int = 0
    timestamp: int = 1
    item: int = 2
    category: int = 3
    delimiter: str = ","
    has_header: bool = False


@dataclass
class Vocab:
    """Dense id assignment for items and categories."""

    item_keys: List[str] = field(default_factory=list)
    category_keys: List[str] = field(default_factory=list)
    item_category: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.item_index: Dict[str, int] = {k: i for i, k in enumerate(self.item_keys)}
        self.category_index: Dict[str, int] = {
            k: i for i, k in enumerate(self.category_keys)
        }

    @property
    def num_items(self) -> int:
        return len(self.item_keys)

    @property
    def num_categories(self) -> int:
        return len(self.category_keys)

    def category_array(self) -> np.ndarray:
        """Item id -> category id as an int array."""
        return np.asarray(self.item_category, dtype=np.int64)


@dataclass
class ClickSession:
    """A time-ordered session before it is split into prefix and target."""

    key: str
    items: List[int]
    start_ts: int
    end_ts: int


@dataclass
class Session:
    """Items of a session prefix and the item that followed them."""

    items: List[int]
    target: Optional[int] = None

    @property
    def sequence(self) -> List[int]:
        """The full click sequence, target included."""
        return self.items + ([self.target] if self.target is not None else [])

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class PreprocessConfig:
    """Filtering, truncation and split settings."""

    min_item_freq: int = 5
    t_max: int = 20
    split_boundary: Optional[int] = None
    test_days: float = 7.0
    augment: bool = True


@dataclass
class Dataset:
    """Filtered train/test sessions with their vocabulary."""

    train: List[Session]
    test: List[Session]
    vocab: Vocab
    config_fingerprint: str = ""

    def train_sequences(self) -> List[List[int]]:
        return [s.sequence for s in self.train]


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


@dataclass
class GraphConfig:
    """Cross-session graph construction settings."""

    epsilon: int = 2
    top_n: int = 12
    top_q: int = 5
    alpha: float = 0.75
    use_side_info: bool = True


@dataclass
class RelationTable:
    """Relation ids for named category pairs plus the three fallbacks."""

    named: Dict[Tuple[int, int], int] = field(default_factory=dict)
    pair_counts: Dict[Tuple[int, int], int] = field(default_factory=dict)

    @property
    def fallback_same(self) -> int:
        return len(self.named)

    @property
    def fallback_drift(self) -> int:
        return len(self.named) + 1

    @property
    def self_relation(self) -> int:
        return len(self.named) + 2

    @property
    def num_relations(self) -> int:
        return len(self.named) + 3

    def lookup(self, ci: int, cj: int) -> int:
        """Relation id for the ordered category pair (ci, cj)."""
        rel = self.named.get((ci, cj))
        if rel is not None:
            return rel
        return self.fallback_same if ci == cj else self.fallback_drift

    def label(self, rel: int) -> str:
        """Human-readable relation name."""
        if rel == self.fallback_same:
            return FallbackRelation.SAME.value
        if rel == self.fallback_drift:
            return FallbackRelation.DRIFT.value
        if rel == self.self_relation:
            return FallbackRelation.SELF.value
        for pair, rid in self.named.items():
            if rid == rel:
                return f"({pair[0]},{pair[1]})"
        return f"unknown:{rel}"


@dataclass
class CrossSessionGraph:
    """Typed weighted directed graph; edge src -> dst feeds dst's aggregation."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    weight: np.ndarray
    relations: RelationTable
    # built from item categories rather than one shared category
    side_info: bool = True

    def __post_init__(self):
        order = np.lexsort((self.src, self.dst))
        self.src = np.asarray(self.src, dtype=np.int64)[order]
        self.dst = np.asarray(self.dst, dtype=np.int64)[order]
        self.rel = np.asarray(self.rel, dtype=np.int64)[order]
        self.weight = np.asarray(self.weight, dtype=np.float64)[order]
        # incoming adjacency: edges of node v are indptr[v]:indptr[v+1]
        self.indptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.add.at(self.indptr, self.dst + 1, 1)
        self.indptr = np.cumsum(self.indptr)

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def in_edges(self, node: int) -> slice:
        return slice(int(self.indptr[node]), int(self.indptr[node + 1]))

    def edge_set(self) -> Dict[Tuple[int, int, int], float]:
        """(src, dst, rel) -> weight, handy for comparisons."""
        return {
            (int(s), int(d), int(r)): float(w)
            for s, d, r, w in zip(self.src, self.dst, self.rel, self.weight)
        }


@dataclass
class Subgraph:
    """Hop-limited restriction of the graph around a batch of sessions."""

    node_ids: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    weight: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])


# ---------------------------------------------------------------------------
# Model, training, retrieval, evaluation
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    """Shape and switches of the encoder stack."""

    dim: int = 256
    layers: int = 2
    share_layers: bool = False
    use_graph: bool = True
    use_personalization: bool = True
    use_side_info: bool = True
    normalize_each_layer: bool = False
    leaky_slope: float = 0.2


@dataclass
class TrainConfig:
    """Optimization schedule and loss settings."""

    batch_size: int = 100
    lr: float = 0.001
    lr_decay: float = 0.8
    lr_decay_every: int = 3
    l2: float = 1e-5
    lambda_: float = 0.1
    epochs: int = 10
    seed: int = 2023
    score_scale: float = 12.0
    precision: Precision = Precision.FLOAT32
    eval_every: int = 0


@dataclass
class RetrievalConfig:
    """SimHash label collaboration settings."""

    hash_dim: int = 64
    pool_size: int = 1500
    retrieve_k: int = 50
    hash_seed: int = 7


@dataclass
class EvalConfig:
    """Evaluation settings."""

    cutoff: int = 20
    test_augment: bool = True
    per_case: bool = False
    popularity: bool = False


@dataclass
class SoftLabel:
    """Sparse item distribution built from retrieved sessions."""

    probs: Dict[int, float] = field(default_factory=dict)

    def total(self) -> float:
        return float(sum(self.probs.values()))


@dataclass
class EpochMetrics:
    """Per-epoch training record written to the epoch log."""

    epoch: int
    lr: float
    loss: float
    ce: float
    kl: float
    wall_seconds: float
    p_at_k: Optional[float] = None
    mrr_at_k: Optional[float] = None

    def to_record(self) -> dict:
        record = {
            "epoch": self.epoch,
            "lr": self.lr,
            "loss": self.loss,
            "ce": self.ce,
            "kl": self.kl,
            "wall_seconds": self.wall_seconds,
        }
        if self.p_at_k is not None:
            record["p_at_20"] = self.p_at_k
            record["mrr_at_20"] = self.mrr_at_k
        return record


@dataclass
class EvalReport:
    """Ranking metrics over a set of test cases."""

    n_cases: int
    p_at_k: float
    mrr_at_k: float
    cutoff: int = 20
    ranks: Optional[List[int]] = None

    def to_record(self) -> dict:
        return {
            "n": self.n_cases,
            f"p_at_{self.cutoff}": self.p_at_k,
            f"mrr_at_{self.cutoff}": self.mrr_at_k,
        }


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference."""

    tensors: Dict[str, np.ndarray]
    vocab_hash: str
    graph_hash: str
    config: dict
    epoch: int = 0
    optimizer_step: int = 0
    optimizer_state: Dict[str, np.ndarray] = field(default_factory=dict)
    dims: Dict[str, int] = field(default_factory=dict)
    # bit generator state of the batch shuffler
    rng_state: dict = field(default_factory=dict)
