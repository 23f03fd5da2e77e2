"""Session vector from per-occurrence item embeddings."""

from typing import Tuple

from autodiff import Tensor, ops
from services.batching import SessionBatch
from services.parameters import ModelParams


def positional_fuse(h_occ: Tensor, params: ModelParams, batch: SessionBatch) -> Tensor:
    """z_i = h_i + P[reverse position] + Lt[length]; the last item gets P[0]."""
    z = ops.add(h_occ, ops.gather_rows(params.position_embedding, batch.rev_pos))
    return ops.add(z, ops.gather_rows(params.length_embedding, batch.len_idx))


def category_context(params: ModelParams, batch: SessionBatch) -> Tensor:
    """Mean category embedding per session, counted per occurrence."""
    categories = ops.gather_rows(params.category_embedding, batch.occ_category)
    return ops.segment_weighted_sum(
        categories, Tensor(batch.inv_len), batch.occ_session, batch.num_sessions
    )


def attention_pool(
    z: Tensor,
    z_last: Tensor,
    virtual: Tensor,
    context: Tensor,
    params: ModelParams,
    batch: SessionBatch,
    slope: float = 0.2,
) -> Tuple[Tensor, Tensor]:
    """Unnormalized MLP-weighted sum of z per session; returns it and gamma."""
    w1, b1, w2, b2 = params.mlp()
    per_occ = [
        z,
        ops.gather_rows(z_last, batch.occ_session),
        ops.gather_rows(virtual, batch.occ_session),
        ops.gather_rows(context, batch.occ_session),
    ]
    hidden = ops.leaky_relu(ops.add(ops.matmul(ops.concat_cols(per_occ), w1), b1), slope)
    gamma = ops.add(ops.matmul(hidden, w2), b2)
    return ops.segment_weighted_sum(z, gamma, batch.occ_session, batch.num_sessions), gamma


def combine(pooled: Tensor, z_last: Tensor, w6: Tensor) -> Tensor:
    """[pooled || z_last] W6."""
    return ops.matmul(ops.concat_cols([pooled, z_last]), w6)


def _session_path(
    h_occ: Tensor, virtual: Tensor, context: Tensor, params: ModelParams, batch: SessionBatch, slope: float
) -> Tensor:
    z = positional_fuse(h_occ, params, batch)
    z_last = ops.gather_rows(z, batch.last_occ)
    pooled, _ = attention_pool(z, z_last, virtual, context, params, batch, slope)
    return combine(pooled, z_last, params.w6)


def encode_session(
    hs_occ: Tensor,
    virtual: Tensor,
    params: ModelParams,
    batch: SessionBatch,
    slope: float = 0.2,
) -> Tensor:
    """Personalized path plus the raw-embedding skip path, one row per session.

    The skip path reuses every session-encoder parameter and stands in the
    mean of the raw embeddings for the virtual node.
    """
    context = category_context(params, batch)
    main = _session_path(hs_occ, virtual, context, params, batch, slope)

    raw_occ = ops.gather_rows(params.item_embedding, batch.occ_item)
    raw_mean = ops.segment_weighted_sum(
        raw_occ, Tensor(batch.inv_len), batch.occ_session, batch.num_sessions
    )
    skip = _session_path(raw_occ, raw_mean, context, params, batch, slope)
    return ops.add(main, skip)
