"""Flattened index arrays describing one batch of session samples."""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from models import CrossSessionGraph, Session, Subgraph
from services.graph_builder import subgraph_for_batch
from utils.errors import InvariantError


@dataclass
class SessionBatch:
    """Every item occurrence of every session in the batch, flattened.

    ``occ_*`` arrays have one entry per occurrence, in session order and then
    position order. Node indices are local to ``subgraph.node_ids``.
    """

    samples: List[Session]
    subgraph: Subgraph
    occ_node: np.ndarray
    occ_item: np.ndarray
    occ_session: np.ndarray
    occ_category: np.ndarray
    rev_pos: np.ndarray
    len_idx: np.ndarray
    inv_len: np.ndarray
    last_occ: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray

    @property
    def num_sessions(self) -> int:
        return len(self.samples)

    @property
    def num_occurrences(self) -> int:
        return int(self.occ_item.shape[0])


def _isolated(items: np.ndarray) -> Subgraph:
    empty = np.zeros(0, dtype=np.int64)
    return Subgraph(
        node_ids=np.unique(items),
        src=empty,
        dst=empty.copy(),
        rel=empty.copy(),
        weight=np.zeros(0, dtype=np.float64),
    )


def make_batch(
    samples: Sequence[Session],
    item_category: np.ndarray,
    t_max: int,
    graph: Optional[CrossSessionGraph] = None,
    hops: int = 0,
) -> SessionBatch:
    """Index a batch; without a graph every node only sees itself."""
    samples = list(samples)
    lengths = np.array([len(s.items) for s in samples], dtype=np.int64)
    if lengths.size == 0 or lengths.min() < 1:
        raise InvariantError("every sample needs at least one item")
    if lengths.max() > t_max:
        raise InvariantError(f"session of length {lengths.max()} exceeds t_max={t_max}")

    occ_item = np.fromiter(
        (v for s in samples for v in s.items), dtype=np.int64, count=int(lengths.sum())
    )
    occ_session = np.repeat(np.arange(len(samples), dtype=np.int64), lengths)
    ends = np.cumsum(lengths)
    starts = ends - lengths
    position = np.arange(occ_item.size) - np.repeat(starts, lengths)
    rev_pos = np.repeat(lengths, lengths) - 1 - position

    if graph is not None:
        subgraph = subgraph_for_batch(graph, [s.items for s in samples], hops)
    else:
        subgraph = _isolated(occ_item)

    targets = np.array(
        [-1 if s.target is None else s.target for s in samples], dtype=np.int64
    )
    return SessionBatch(
        samples=samples,
        subgraph=subgraph,
        occ_node=np.searchsorted(subgraph.node_ids, occ_item),
        occ_item=occ_item,
        occ_session=occ_session,
        occ_category=np.asarray(item_category, dtype=np.int64)[occ_item],
        rev_pos=rev_pos,
        len_idx=np.repeat(lengths - 1, lengths),
        inv_len=np.repeat(1.0 / lengths, lengths)[:, None],
        last_occ=ends - 1,
        lengths=lengths,
        targets=targets,
    )
