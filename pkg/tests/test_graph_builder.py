import math
from collections import Counter, defaultdict

import numpy as np
import pytest

from models import CrossSessionGraph, GraphConfig, RelationTable
from services.graph_builder import (
    build_graph,
    build_relation_table,
    describe_graph,
    edge_weight,
    epsilon_cooccurrence,
    graph_hash,
    hop_distances,
    subgraph_for_batch,
)
from utils.errors import DatasetError


def oracle_graph(sessions, categories, num_categories, config):
    """Edge dict (src, dst, rel) -> weight by enumerating every position pair."""
    categories = np.zeros_like(categories) if not config.use_side_info else categories
    cooc = Counter()
    freq = Counter()
    for s in sessions:
        for k, v in enumerate(s):
            freq[v] += 1
            for j, u in enumerate(s):
                if j != k and abs(j - k) <= config.epsilon and u != v:
                    cooc[(v, u)] += 1

    pair_totals = Counter()
    for (i, j), c in cooc.items():
        pair_totals[(int(categories[i]), int(categories[j]))] += c
    ranked = sorted(
        pair_totals,
        key=lambda p: (-pair_totals[p], p[0] * num_categories + p[1]),
    )
    named = {p: r for r, p in enumerate(ranked[: config.top_q])}
    same, drift = len(named), len(named) + 1

    candidates = defaultdict(list)
    for (i, j), c in cooc.items():
        pair = (int(categories[i]), int(categories[j]))
        rel = named.get(pair, same if pair[0] == pair[1] else drift)
        w = c / ((config.alpha * math.log(freq[i]) + 1) * (config.alpha * math.log(freq[j]) + 1))
        candidates[(i, rel)].append((w, j))

    edges = {}
    for (i, rel), items in candidates.items():
        items.sort(key=lambda wj: (-wj[0], wj[1]))
        for w, j in items[: config.top_n]:
            edges[(j, i, rel)] = w
    return edges, named


def test_cooccurrence_smallest_case():
    cooc = epsilon_cooccurrence([[0, 1]], 1, 2)
    assert cooc.as_dict() == {(0, 1): 1, (1, 0): 1}
    assert list(cooc.freq) == [1, 1]


def test_cooccurrence_respects_window():
    cooc = epsilon_cooccurrence([[0, 1, 2]], 1, 3)
    assert cooc.as_dict() == {(0, 1): 1, (1, 0): 1, (1, 2): 1, (2, 1): 1}


def test_cooccurrence_repeated_item():
    cooc = epsilon_cooccurrence([[0, 1, 0]], 1, 2)
    assert cooc.as_dict() == {(0, 1): 2, (1, 0): 2}
    assert list(cooc.freq) == [2, 1]


def test_cooccurrence_is_symmetric_and_monotone_in_epsilon():
    rng = np.random.default_rng(4)
    sessions = [list(rng.integers(0, 12, size=rng.integers(2, 8))) for _ in range(20)]
    previous = {}
    for eps in (1, 2, 3):
        counts = epsilon_cooccurrence(sessions, eps, 12).as_dict()
        assert all(counts[(j, i)] == c for (i, j), c in counts.items())
        assert all(counts.get(pair, 0) >= c for pair, c in previous.items())
        previous = counts


def test_edge_weight_unit_frequency():
    assert edge_weight(1, 1, 1, 0.75) == 1.0
    assert edge_weight(0, 4, 4, 0.75) == 0.0


def test_edge_weight_reference_value():
    expected = 2.0 / ((0.75 * math.log(3) + 1.0) * (0.75 * math.log(2) + 1.0))
    assert edge_weight(2, 3, 2, 0.75) == pytest.approx(expected, abs=1e-12)
    assert edge_weight(2, 3, 2, 0.75) == pytest.approx(0.7214, abs=5e-5)


def test_relation_table_ranking():
    # categories: items 0,1 -> 0; item 2 -> 1
    cooc = epsilon_cooccurrence([[0, 1, 0, 1, 0, 1, 2]], 1, 3)
    table = build_relation_table(cooc, np.array([0, 0, 1]), 2, top_q=1)
    assert table.named == {(0, 0): 0}
    assert table.lookup(0, 1) == table.fallback_drift
    assert table.lookup(1, 1) == table.fallback_same
    assert table.num_relations == 4


def test_relation_table_saturates():
    cooc = epsilon_cooccurrence([[0, 1, 2]], 2, 3)
    table = build_relation_table(cooc, np.array([0, 1, 2]), 3, top_q=100)
    assert len(table.named) == len(table.pair_counts) == 6


def test_zero_q_has_only_fallbacks():
    sessions = [[0, 1, 2, 3]]
    graph = build_graph(sessions, np.array([0, 0, 1, 1]), 2, GraphConfig(top_q=0))
    assert graph.relations.named == {}
    assert set(np.unique(graph.rel)) <= {0, 1}


def test_single_session_graph():
    graph = build_graph([[0, 1]], np.array([0, 0]), 1, GraphConfig(epsilon=1, top_q=0))
    assert graph.edge_set() == {(1, 0, 0): 1.0, (0, 1, 0): 1.0}
    assert graph.relations.self_relation == 2


def test_pruning_keeps_heaviest():
    # hub 0 co-occurs with 15 neighbors; neighbor k appears k times next to it
    sessions = []
    for k in range(1, 16):
        sessions += [[0, k]] * k
    categories = np.zeros(16, dtype=np.int64)
    graph = build_graph(sessions, categories, 1, GraphConfig(epsilon=1, top_n=12, top_q=0))
    into_hub = graph.src[graph.dst == 0]
    assert into_hub.size == 12
    edges, _ = oracle_graph(sessions, categories, 1, GraphConfig(epsilon=1, top_n=12, top_q=0))
    assert set(int(s) for s in into_hub) == {j for (j, i, _) in edges if i == 0}


def test_graph_matches_oracle_on_random_corpora():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        num_items = int(rng.integers(2, 16))
        num_categories = int(rng.integers(1, 5))
        categories = rng.integers(0, num_categories, size=num_items)
        sessions = [
            [int(v) for v in rng.integers(0, num_items, size=rng.integers(1, 7))]
            for _ in range(int(rng.integers(1, 9)))
        ]
        config = GraphConfig(
            epsilon=int(rng.choice([1, 2, 3])),
            top_q=int(rng.choice([0, 1, 2])),
            top_n=int(rng.choice([2, 12])),
        )
        graph = build_graph(sessions, categories, num_categories, config)
        expected, named = oracle_graph(sessions, categories, num_categories, config)
        got = graph.edge_set()
        assert set(got) == set(expected), f"trial {trial}"
        for key, w in expected.items():
            assert got[key] == pytest.approx(w, abs=1e-12)
        assert graph.relations.named == named
        assert all(w > 0 for w in got.values())
        assert all(s != d for s, d, _ in got)


def test_graph_without_side_info_uses_one_category():
    graph = build_graph([[0, 1, 2]], np.array([0, 1, 2]), 3, GraphConfig(use_side_info=False, top_q=0))
    assert set(np.unique(graph.rel)) == {graph.relations.fallback_same}


def test_empty_train_set_is_fatal():
    with pytest.raises(DatasetError):
        build_graph([], np.array([0]), 1, GraphConfig())


def _chain_graph():
    # a(0) -> b(1) -> c(2)
    return CrossSessionGraph(
        num_nodes=3,
        src=np.array([0, 1]),
        dst=np.array([1, 2]),
        rel=np.array([0, 0]),
        weight=np.array([1.0, 1.0]),
        relations=RelationTable(),
    )


def test_subgraph_zero_hops():
    sub = subgraph_for_batch(_chain_graph(), [[2]], 0)
    assert list(sub.node_ids) == [2]
    assert sub.num_edges == 0


def test_subgraph_one_hop_chain():
    sub = subgraph_for_batch(_chain_graph(), [[2]], 1)
    assert list(sub.node_ids) == [1, 2]
    assert [(int(sub.node_ids[s]), int(sub.node_ids[d])) for s, d in zip(sub.src, sub.dst)] == [(1, 2)]


def test_subgraph_nodes_match_bfs_oracle():
    rng = np.random.default_rng(8)
    n = 25
    src = rng.integers(0, n, size=60)
    dst = rng.integers(0, n, size=60)
    keep = src != dst
    graph = CrossSessionGraph(
        num_nodes=n, src=src[keep], dst=dst[keep], rel=np.zeros(keep.sum(), dtype=np.int64),
        weight=np.ones(keep.sum()), relations=RelationTable(),
    )
    seeds = [3, 7]
    frontier, seen = set(seeds), set(seeds)
    for _ in range(2):
        frontier = {int(s) for s, d in zip(graph.src, graph.dst) if int(d) in frontier} - seen
        seen |= frontier
    sub = subgraph_for_batch(graph, [seeds], 2)
    assert set(int(v) for v in sub.node_ids) == seen
    assert set(hop_distances(graph, seeds, 2)) == seen


def test_graph_hash_and_summary():
    graph = build_graph([[0, 1, 2], [2, 1]], np.array([0, 0, 1]), 2, GraphConfig(top_q=1))
    again = build_graph([[0, 1, 2], [2, 1]], np.array([0, 0, 1]), 2, GraphConfig(top_q=1))
    assert graph_hash(graph) == graph_hash(again)
    summary = describe_graph(graph)
    assert summary["edges"] == graph.num_edges
    assert summary["relations"] == 4
    assert len(summary["named_relations"]) == 1
