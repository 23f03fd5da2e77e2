"""Relation-aware graph attention with per-session personalization.

General embeddings live on subgraph nodes; personalized embeddings live on item
occurrences, so an item shared by two sessions gets two personalized vectors.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from autodiff import Tensor, ops
from models import ModelConfig, Subgraph
from services.batching import SessionBatch
from services.parameters import LayerParams, ModelParams
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class EdgeList:
    """Attention edges of one layer: graph edges plus one self edge per node."""

    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    weight: np.ndarray
    num_nodes: int


def attention_edges(subgraph: Subgraph, self_relation: int, use_graph: bool = True) -> EdgeList:
    """Graph edges (when enabled) followed by self edges with weight 1."""
    n = subgraph.num_nodes
    loops = np.arange(n, dtype=np.int64)
    if use_graph:
        src = np.concatenate([subgraph.src, loops])
        dst = np.concatenate([subgraph.dst, loops])
        rel = np.concatenate([subgraph.rel, np.full(n, self_relation, dtype=np.int64)])
        weight = np.concatenate([subgraph.weight, np.ones(n)])
    else:
        src, dst = loops, loops.copy()
        rel = np.full(n, self_relation, dtype=np.int64)
        weight = np.ones(n)
    return EdgeList(src=src, dst=dst, rel=rel, weight=weight, num_nodes=n)


def _rowdot(a: Tensor, b: Tensor) -> Tensor:
    return ops.sum(ops.mul(a, b), axis=1)


def _segment_mean(values: Tensor, groups: np.ndarray, inv_len: np.ndarray, num_groups: int) -> Tensor:
    return ops.segment_weighted_sum(values, Tensor(inv_len), groups, num_groups)


def init_virtual(h_occ: Tensor, batch: SessionBatch) -> Tensor:
    """Mean of each session's item embeddings, one row per session."""
    return _segment_mean(h_occ, batch.occ_session, batch.inv_len, batch.num_sessions)


def attention_scores(
    h: Tensor, edges: EdgeList, layer: LayerParams, relation_embedding: Tensor, slope: float
) -> Tensor:
    """a^T LeakyReLU(W1_att [h_dst || h_src || e || r]) for every edge, shape (E, 1).

    The concatenation is applied block-wise, projecting nodes and relations once
    before gathering.
    """
    d = h.shape[1]
    w_dst = ops.slice_rows(layer.w1_att, 0, d)
    w_src = ops.slice_rows(layer.w1_att, d, 2 * d)
    w_edge = ops.slice_rows(layer.w1_att, 2 * d, 2 * d + 1)
    w_rel = ops.slice_rows(layer.w1_att, 2 * d + 1, 3 * d + 1)

    pre = ops.add(
        ops.gather_rows(ops.matmul(h, w_dst), edges.dst),
        ops.gather_rows(ops.matmul(h, w_src), edges.src),
    )
    pre = ops.add(pre, ops.matmul(Tensor(edges.weight[:, None]), w_edge))
    pre = ops.add(pre, ops.gather_rows(ops.matmul(relation_embedding, w_rel), edges.rel))
    return ops.matmul(ops.leaky_relu(pre, slope), layer.attn)


def rgat_layer(
    h: Tensor,
    edges: EdgeList,
    layer: LayerParams,
    relation_embedding: Tensor,
    slope: float = 0.2,
) -> Tuple[Tensor, Tensor]:
    """One aggregation step; returns new node embeddings and the attention weights."""
    scores = attention_scores(h, edges, layer, relation_embedding, slope)
    alpha = ops.segment_softmax(scores, edges.dst, edges.num_nodes)
    messages = ops.gather_rows(ops.matmul(h, layer.w1_agg), edges.src)
    return ops.segment_weighted_sum(messages, alpha, edges.dst, edges.num_nodes), alpha


def personalize(h_occ: Tensor, virtual_occ: Tensor, layer: LayerParams) -> Tuple[Tensor, Tensor]:
    """Gate each occurrence toward its session's virtual node.

    Returns (1 - delta) * h + delta * virtual and the gate values delta.
    """
    d = h_occ.shape[1]
    dot = _rowdot(ops.matmul(h_occ, layer.w2), ops.matmul(virtual_occ, layer.w3))
    delta = ops.sigmoid(ops.scalar_mul(dot, 1.0 / math.sqrt(d)))
    return ops.add(h_occ, ops.mul(delta, ops.sub(virtual_occ, h_occ))), delta


def update_virtual(
    hs_occ: Tensor, virtual_occ: Tensor, layer: LayerParams, batch: SessionBatch
) -> Tuple[Tensor, Tensor]:
    """Attention-weighted sum of personalized embeddings per session; returns it and beta."""
    d = hs_occ.shape[1]
    dot = _rowdot(ops.matmul(hs_occ, layer.w4), ops.matmul(virtual_occ, layer.w5))
    beta = ops.segment_softmax(
        ops.scalar_mul(dot, 1.0 / math.sqrt(d)), batch.occ_session, batch.num_sessions
    )
    return ops.segment_weighted_sum(hs_occ, beta, batch.occ_session, batch.num_sessions), beta


def encode_items(
    batch: SessionBatch,
    params: ModelParams,
    config: ModelConfig,
    self_relation: Optional[int] = None,
) -> Tuple[Tensor, Tensor]:
    """Final-layer personalized occurrence embeddings and per-session virtual nodes."""
    if self_relation is None:
        self_relation = params.dims.num_relations - 1
    h = ops.gather_rows(params.item_embedding, batch.subgraph.node_ids)
    hs_occ = ops.gather_rows(h, batch.occ_node)
    virtual = init_virtual(hs_occ, batch)
    if config.layers == 0:
        return hs_occ, virtual

    edges = attention_edges(batch.subgraph, self_relation, config.use_graph)
    for k in range(config.layers):
        layer = params.layer(k)
        h, _ = rgat_layer(h, edges, layer, params.relation_embedding, config.leaky_slope)
        if config.normalize_each_layer:
            h = ops.l2_normalize_rows(h)
        h_occ = ops.gather_rows(h, batch.occ_node)
        virtual_occ = ops.gather_rows(virtual, batch.occ_session)
        if config.use_personalization:
            hs_occ, _ = personalize(h_occ, virtual_occ, layer)
        else:
            hs_occ = h_occ
        virtual, _ = update_virtual(hs_occ, virtual_occ, layer, batch)
    return hs_occ, virtual
