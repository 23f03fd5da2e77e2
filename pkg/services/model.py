"""The full encoder stack: graph sampling, item encoding, session encoding, scoring."""

from typing import Optional, Sequence

import numpy as np

from autodiff import Tensor, no_grad, ops
from models import CrossSessionGraph, ModelConfig, Session
from services.batching import SessionBatch, make_batch
from services.item_encoder import encode_items
from services.parameters import ModelParams
from services.session_encoder import encode_session


def score_logits(session_vectors: Tensor, item_table: Tensor, score_scale: float) -> Tensor:
    """tau * cosine similarity of each session vector with every item row."""
    sessions = ops.l2_normalize_rows(session_vectors)
    items = ops.l2_normalize_rows(item_table)
    return ops.scalar_mul(ops.matmul(sessions, ops.transpose(items)), score_scale)


class CaresModel:
    """Parameters plus the graph and category lookup they are trained against."""

    def __init__(
        self,
        params: ModelParams,
        config: ModelConfig,
        item_category: np.ndarray,
        graph: Optional[CrossSessionGraph] = None,
        score_scale: float = 12.0,
    ):
        self.params = params
        self.config = config
        self.graph = graph if config.use_graph else None
        self.score_scale = score_scale
        categories = np.asarray(item_category, dtype=np.int64)
        self.item_category = categories if config.use_side_info else np.zeros_like(categories)
        if graph is not None:
            self.self_relation = graph.relations.self_relation
        else:
            self.self_relation = params.dims.num_relations - 1

    @property
    def num_items(self) -> int:
        return self.params.dims.num_items

    def make_batch(self, samples: Sequence[Session]) -> SessionBatch:
        return make_batch(
            samples,
            self.item_category,
            self.params.dims.t_max,
            graph=self.graph,
            hops=self.config.layers,
        )

    def session_vectors(self, batch: SessionBatch) -> Tensor:
        """h_s for every session of the batch, shape (B, d)."""
        hs_occ, virtual = encode_items(batch, self.params, self.config, self.self_relation)
        return encode_session(hs_occ, virtual, self.params, batch, self.config.leaky_slope)

    def logits(self, session_vectors: Tensor) -> Tensor:
        return score_logits(session_vectors, self.params.item_embedding, self.score_scale)

    def score(self, samples: Sequence[Session]) -> np.ndarray:
        """Logits for a batch without recording gradients."""
        with no_grad():
            batch = self.make_batch(samples)
            return self.logits(self.session_vectors(batch)).data
