"""Differentiable primitives.

Every function takes tensors (constants are wrapped), computes its result with
numpy and registers a backward rule on the active tape. Index and group arrays
are plain integer numpy arrays and never receive gradients.
"""

from typing import Optional, Sequence

import numpy as np

from autodiff.tensor import Tensor, as_tensor, is_debug, record
from utils.errors import NumericalError, ShapeError

L2_EPS = 1e-12


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _require_2d(op: str, *tensors: Tensor):
    for t in tensors:
        if t.ndim != 2:
            raise ShapeError(f"{op}: expected a 2-d tensor, got shape {t.shape}")


def _group_sum(values: np.ndarray, groups: np.ndarray, num_groups: int) -> np.ndarray:
    out = np.zeros((num_groups,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, groups, values)
    return out


# ---------------------------------------------------------------------------
# Linear algebra and arithmetic
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.data, b.data
    return record(
        "matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g)
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    _require_2d("transpose", a)
    return record("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return record(
        "add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return record(
        "sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting of unit axes."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.data, b.data
    return record(
        "mul",
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return record("scalar_mul", a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,))


def concat_rows(tensors: Sequence) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    _require_2d("concat_rows", *tensors)
    widths = {t.shape[1] for t in tensors}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: column counts differ {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[0] for t in tensors])[:-1]
    return record(
        "concat_rows",
        np.concatenate([t.data for t in tensors], axis=0),
        tensors,
        lambda g: np.split(g, splits, axis=0),
    )


def concat_cols(tensors: Sequence) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    _require_2d("concat_cols", *tensors)
    heights = {t.shape[0] for t in tensors}
    if len(heights) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]
    return record(
        "concat_cols",
        np.concatenate([t.data for t in tensors], axis=1),
        tensors,
        lambda g: np.split(g, splits, axis=1),
    )


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return record("leaky_relu", a.data * scale, (a,), lambda g: (g * scale,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return record("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    _require_2d("row_softmax", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    return record(
        "row_softmax",
        y,
        (a,),
        lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),),
    )


def log(a, floor: Optional[float] = None) -> Tensor:
    """Natural log; values below ``floor`` are clamped and pass no gradient."""
    a = as_tensor(a)
    x = a.data
    if floor is not None:
        clamped = x < floor
        safe = np.where(clamped, floor, x).astype(x.dtype)
        return record(
            "log", np.log(safe), (a,), lambda g: (np.where(clamped, 0.0, g / safe),)
        )
    if np.any(x <= 0):
        raise NumericalError("log of a non-positive value")
    return record("log", np.log(x), (a,), lambda g: (g / x,))


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum(a, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy
    """Sum of all entries (scalar) or along one axis (kept as a unit axis)."""
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        return record(
            "sum", np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
        )
    return record(
        "sum",
        a.data.sum(axis=axis, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def mean_rows(a) -> Tensor:
    """Column-wise mean, shape (1, p)."""
    a = as_tensor(a)
    _require_2d("mean_rows", a)
    n = a.shape[0]
    if n == 0:
        raise ShapeError("mean_rows of an empty tensor")
    shape = a.shape
    return record(
        "mean_rows",
        a.data.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g / n, shape).copy(),),
    )


def weighted_sum_rows(a, w) -> Tensor:
    """sum_i w_i a_i for a (n, p) and w (n, 1); shape (1, p)."""
    a, w = as_tensor(a), as_tensor(w)
    _require_2d("weighted_sum_rows", a, w)
    if w.shape != (a.shape[0], 1):
        raise ShapeError(f"weighted_sum_rows: weights {w.shape} do not match rows {a.shape}")
    av, wv = a.data, w.data
    return record(
        "weighted_sum_rows",
        (wv * av).sum(axis=0, keepdims=True),
        (a, w),
        lambda g: (wv * g, (av * g).sum(axis=1, keepdims=True)),
    )


# ---------------------------------------------------------------------------
# Indexing and segment operations
# ---------------------------------------------------------------------------


def gather_rows(a, index) -> Tensor:
    a = as_tensor(a)
    _require_2d("gather_rows", a)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for shape {a.shape}")
    n = a.shape[0]
    return record(
        "gather_rows",
        a.data[index],
        (a,),
        lambda g: (_group_sum(g, index, n),),
    )


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of a 2-d tensor."""
    a = as_tensor(a)
    _require_2d("slice_rows", a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return record("slice_rows", a.data[start:stop].copy(), (a,), backward)


def _check_groups(op: str, rows: int, groups: np.ndarray, num_groups: int):
    if groups.shape != (rows,):
        raise ShapeError(f"{op}: group ids {groups.shape} do not match {rows} rows")
    if groups.size and (groups.min() < 0 or groups.max() >= num_groups):
        raise ShapeError(f"{op}: group id out of range [0, {num_groups})")


def segment_softmax(scores, groups, num_groups: int) -> Tensor:
    """Softmax of a (n, 1) column within each group of rows."""
    scores = as_tensor(scores)
    groups = np.asarray(groups, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[1] != 1:
        raise ShapeError(f"segment_softmax: expected (n, 1) scores, got {scores.shape}")
    _check_groups("segment_softmax", scores.shape[0], groups, num_groups)

    x = scores.data[:, 0]
    group_max = np.full(num_groups, -np.inf, dtype=x.dtype)
    np.maximum.at(group_max, groups, x)
    e = np.exp(x - group_max[groups])
    totals = np.zeros(num_groups, dtype=x.dtype)
    np.add.at(totals, groups, e)
    y = (e / totals[groups])[:, None]

    def backward(g):
        dots = np.zeros(num_groups, dtype=g.dtype)
        np.add.at(dots, groups, (g * y)[:, 0])
        return (y * (g - dots[groups][:, None]),)

    return record("segment_softmax", y, (scores,), backward)


def segment_weighted_sum(values, weights, groups, num_groups: int) -> Tensor:
    """out[g] = sum over rows i in group g of weights_i * values_i."""
    values, weights = as_tensor(values), as_tensor(weights)
    groups = np.asarray(groups, dtype=np.int64)
    _require_2d("segment_weighted_sum", values, weights)
    if weights.shape != (values.shape[0], 1):
        raise ShapeError(
            f"segment_weighted_sum: weights {weights.shape} do not match values {values.shape}"
        )
    _check_groups("segment_weighted_sum", values.shape[0], groups, num_groups)
    vv, wv = values.data, weights.data

    def backward(g):
        gi = g[groups]
        return (gi * wv, (gi * vv).sum(axis=1, keepdims=True))

    return record(
        "segment_weighted_sum",
        _group_sum(vv * wv, groups, num_groups),
        (values, weights),
        backward,
    )


def l2_normalize_rows(a) -> Tensor:
    a = as_tensor(a)
    _require_2d("l2_normalize_rows", a)
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    if np.any(norms == 0):
        if is_debug():
            raise NumericalError("l2_normalize_rows: zero row")
    safe = np.maximum(norms, L2_EPS).astype(a.data.dtype)
    y = a.data / safe
    return record(
        "l2_normalize_rows",
        y,
        (a,),
        lambda g: ((g - y * (g * y).sum(axis=1, keepdims=True)) / safe,),
    )
