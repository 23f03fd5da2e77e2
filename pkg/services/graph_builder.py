"""Multi-relation cross-session item graph.

An edge ``src -> dst`` means ``src`` occurred within ``epsilon`` positions of
``dst`` in some training session; it feeds ``dst``'s neighborhood aggregation.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from models import CrossSessionGraph, GraphConfig, RelationTable, Subgraph
from utils.errors import DatasetError
from utils.helpers import hash_arrays, stable_hash
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class Cooccurrence:
    """Sparse epsilon-neighbor counts: count[k] for ordered pair (left[k], right[k])."""

    left: np.ndarray
    right: np.ndarray
    count: np.ndarray
    freq: np.ndarray

    def as_dict(self) -> Dict[Tuple[int, int], int]:
        return {
            (int(i), int(j)): int(c) for i, j, c in zip(self.left, self.right, self.count)
        }


def _flatten(sessions: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    lengths = np.fromiter((len(s) for s in sessions), dtype=np.int64, count=len(sessions))
    if lengths.sum() == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    flat = np.fromiter(
        (v for s in sessions for v in s), dtype=np.int64, count=int(lengths.sum())
    )
    owner = np.repeat(np.arange(len(sessions), dtype=np.int64), lengths)
    return flat, owner


def epsilon_cooccurrence(
    sessions: Sequence[Sequence[int]], epsilon: int, num_items: int
) -> Cooccurrence:
    """Count ordered item pairs within ``epsilon`` positions of each other.

    Pairs of two occurrences of the same item are not counted.
    """
    flat, owner = _flatten(sessions)
    freq = np.bincount(flat, minlength=num_items).astype(np.int64)

    lefts, rights = [], []
    for offset in range(1, epsilon + 1):
        if offset >= flat.size:
            break
        same_session = owner[:-offset] == owner[offset:]
        a = flat[:-offset][same_session]
        b = flat[offset:][same_session]
        distinct = a != b
        a, b = a[distinct], b[distinct]
        # both occurrences see each other
        lefts.extend((a, b))
        rights.extend((b, a))

    if not lefts:
        empty = np.zeros(0, dtype=np.int64)
        return Cooccurrence(empty, empty.copy(), empty.copy(), freq)

    keys = np.concatenate(lefts) * num_items + np.concatenate(rights)
    unique, counts = np.unique(keys, return_counts=True)
    return Cooccurrence(
        left=unique // num_items,
        right=unique % num_items,
        count=counts.astype(np.int64),
        freq=freq,
    )


def edge_weight(cooc, freq_i, freq_j, alpha: float = 0.75):
    """cooc / ((alpha*ln(freq_i) + 1) * (alpha*ln(freq_j) + 1)); works on arrays too."""
    cooc = np.asarray(cooc, dtype=np.float64)
    fi = np.asarray(freq_i, dtype=np.float64)
    fj = np.asarray(freq_j, dtype=np.float64)
    value = cooc / ((alpha * np.log(fi) + 1.0) * (alpha * np.log(fj) + 1.0))
    return float(value) if value.ndim == 0 else value


def build_relation_table(
    cooc: Cooccurrence, item_category: np.ndarray, num_categories: int, top_q: int
) -> RelationTable:
    """Name the ``top_q`` ordered category pairs with the largest total count."""
    if cooc.count.size == 0 or num_categories == 0:
        return RelationTable()
    pair_ids = item_category[cooc.left] * num_categories + item_category[cooc.right]
    totals = np.bincount(pair_ids, weights=cooc.count, minlength=num_categories ** 2)
    present = np.flatnonzero(totals > 0)
    # count desc, pair id asc
    order = present[np.lexsort((present, -totals[present]))]

    pair_counts = {
        (int(p // num_categories), int(p % num_categories)): int(totals[p]) for p in order
    }
    named = {
        (int(p // num_categories), int(p % num_categories)): rank
        for rank, p in enumerate(order[:top_q])
    }
    return RelationTable(named=named, pair_counts=pair_counts)


def relation_matrix(relations: RelationTable, num_categories: int) -> np.ndarray:
    """(l, l) lookup array: [c_i, c_j] -> relation id."""
    table = np.full((num_categories, num_categories), relations.fallback_drift, dtype=np.int64)
    np.fill_diagonal(table, relations.fallback_same)
    for (ci, cj), rel in relations.named.items():
        table[ci, cj] = rel
    return table


def _rank_within_groups(group_keys: Tuple[np.ndarray, ...], order: np.ndarray) -> np.ndarray:
    """0-based position of each sorted element inside its run of equal keys."""
    n = order.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    boundary = np.zeros(n, dtype=bool)
    boundary[0] = True
    for key in group_keys:
        sorted_key = key[order]
        boundary[1:] |= sorted_key[1:] != sorted_key[:-1]
    starts = np.flatnonzero(boundary)
    run_start = np.repeat(starts, np.diff(np.append(starts, n)))
    return np.arange(n) - run_start


def build_graph(
    train_sessions: Sequence[Sequence[int]],
    item_category: np.ndarray,
    num_categories: int,
    config: GraphConfig,
) -> CrossSessionGraph:
    """Cross-session graph over the training sessions.

    Each (dst, relation) keeps its ``top_n`` heaviest incoming edges, ties by
    ascending source id.
    """
    if not train_sessions:
        raise DatasetError("cannot build a graph from an empty train set")

    num_items = int(item_category.shape[0])
    categories = np.asarray(item_category, dtype=np.int64)
    if not config.use_side_info:
        categories = np.zeros_like(categories)
        num_categories = 1

    cooc = epsilon_cooccurrence(train_sessions, config.epsilon, num_items)
    relations = build_relation_table(cooc, categories, num_categories, config.top_q)

    # pair (i, j) becomes edge j -> i
    dst, src = cooc.left, cooc.right
    weight = edge_weight(cooc.count, cooc.freq[dst], cooc.freq[src], config.alpha)
    weight = np.atleast_1d(np.asarray(weight, dtype=np.float64))
    rel = relation_matrix(relations, num_categories)[categories[dst], categories[src]]

    order = np.lexsort((src, -weight, rel, dst))
    rank = _rank_within_groups((dst, rel), order)
    kept = order[rank < config.top_n]

    graph = CrossSessionGraph(
        num_nodes=num_items,
        src=src[kept],
        dst=dst[kept],
        rel=rel[kept],
        weight=weight[kept],
        relations=relations,
        side_info=config.use_side_info,
    )
    logger.info(
        f"Built graph: nodes={graph.num_nodes} edges={graph.num_edges} "
        f"relations={relations.num_relations} (pruned {dst.size - kept.size})"
    )
    return graph


def _edge_indices(graph: CrossSessionGraph, nodes: np.ndarray) -> np.ndarray:
    """Indices of all incoming edges of ``nodes`` in the graph's edge arrays."""
    starts = graph.indptr[nodes]
    lengths = graph.indptr[nodes + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
    return offsets + np.arange(total)


def hop_distances(graph: CrossSessionGraph, seeds: Iterable[int], hops: int) -> Dict[int, int]:
    """Breadth-first distance over incoming edges, up to ``hops`` steps."""
    frontier = np.unique(np.asarray(list(seeds), dtype=np.int64))
    dist = {int(v): 0 for v in frontier}
    for step in range(1, hops + 1):
        if frontier.size == 0:
            break
        neighbors = np.unique(graph.src[_edge_indices(graph, frontier)])
        new = [int(v) for v in neighbors if int(v) not in dist]
        for v in new:
            dist[v] = step
        frontier = np.asarray(new, dtype=np.int64)
    return dist


def subgraph_for_batch(
    graph: CrossSessionGraph, batch_sessions: Iterable[Iterable[int]], hops: int
) -> Subgraph:
    """Batch items plus their incoming-neighbor closure up to ``hops`` steps.

    Only edges into nodes closer than ``hops`` are kept: those are the
    aggregations that can reach a batch item within ``hops`` layers.
    """
    # Same batch outputs as keeping every edge between retained nodes: an edge
    # into a node at distance ``hops`` changes only that node's later-layer
    # rows, and no batch item reads them within ``hops`` layers.
    seeds = {int(v) for s in batch_sessions for v in s}
    dist = hop_distances(graph, seeds, hops)
    node_ids = np.array(sorted(dist), dtype=np.int64)
    inner = np.array(sorted(v for v, d in dist.items() if d < hops), dtype=np.int64)
    edges = _edge_indices(graph, inner) if inner.size else np.zeros(0, dtype=np.int64)

    return Subgraph(
        node_ids=node_ids,
        src=np.searchsorted(node_ids, graph.src[edges]),
        dst=np.searchsorted(node_ids, graph.dst[edges]),
        rel=graph.rel[edges],
        weight=graph.weight[edges],
    )


def graph_hash(graph: CrossSessionGraph) -> str:
    """Digest of the graph as it is serialized (f32 weights)."""
    relations = sorted((list(pair), rel) for pair, rel in graph.relations.named.items())
    return hash_arrays(
        np.asarray([graph.num_nodes], dtype=np.int64),
        graph.src.astype(np.uint32),
        graph.dst.astype(np.uint32),
        graph.rel.astype(np.uint16),
        graph.weight.astype(np.float32),
    ) + stable_hash({"relations": relations, "side_info": graph.side_info})[:16]


def describe_graph(graph: CrossSessionGraph) -> dict:
    """Summary counts for inspection and the relation report."""
    relations = graph.relations
    per_relation = np.bincount(graph.rel, minlength=relations.num_relations)
    in_degree = np.diff(graph.indptr)
    named: List[dict] = []
    for (ci, cj), rel in sorted(relations.named.items(), key=lambda kv: kv[1]):
        named.append(
            {
                "relation": rel,
                "pair": [ci, cj],
                "count": relations.pair_counts.get((ci, cj), 0),
                "edges": int(per_relation[rel]),
            }
        )
    return {
        "nodes": graph.num_nodes,
        "edges": graph.num_edges,
        "relations": relations.num_relations,
        "side_info": graph.side_info,
        "named_relations": named,
        "fallback_edges": {
            "same": int(per_relation[relations.fallback_same]),
            "drift": int(per_relation[relations.fallback_drift]),
        },
        "in_degree": {
            "min": int(in_degree.min()) if in_degree.size else 0,
            "max": int(in_degree.max()) if in_degree.size else 0,
            "mean": float(in_degree.mean()) if in_degree.size else 0.0,
        },
    }
