"""Dense tensors and the tape that records how they were computed.

Operations only record when a tape is active on the current thread and at least
one input requires a gradient. Each thread keeps its own tape stack, so
independent forward passes can run side by side.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from models import Precision
from utils.errors import InvariantError, NumericalError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_runtime = {"dtype": np.float32, "debug": False}
_local = threading.local()


def set_precision(precision: Precision):
    """Select the float width for every tensor created afterwards."""
    _runtime["dtype"] = np.float64 if precision == Precision.FLOAT64 else np.float32


def get_dtype():
    return _runtime["dtype"]


def set_debug(enabled: bool):
    """Trap non-finite values after every op when enabled."""
    _runtime["debug"] = bool(enabled)


def is_debug() -> bool:
    return _runtime["debug"]


@contextmanager
def precision(p: Precision) -> Iterator[None]:
    """Temporarily switch float width."""
    previous = _runtime["dtype"]
    set_precision(p)
    try:
        yield
    finally:
        _runtime["dtype"] = previous


class Tensor:
    """A dense array that may take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "name", "is_leaf")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ):
        self.data: np.ndarray = np.array(data, dtype=dtype or get_dtype(), copy=True)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.is_leaf = True

    @classmethod
    def _result(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.name = None
        out.is_leaf = False
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        """Detached copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    """Wrap constants; tensors pass through untouched."""
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class TapeEntry:
    """One recorded primitive application."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of primitive applications for reverse-mode gradients."""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry):
        self.entries.append(entry)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf needing it."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.entries:
            raise InvariantError("backward called on an empty tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            for tensor, tg in zip(entry.inputs, entry.backward(g)):
                if tg is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    tensor.grad = tg.copy() if tensor.grad is None else tensor.grad + tg
                else:
                    key = id(tensor)
                    grads[key] = grads[key] + tg if key in grads else tg
        self.entries.clear()

    def dump(self) -> str:
        """Text listing of the recorded ops, one per line."""
        lines = []
        for i, entry in enumerate(self.entries):
            shapes = ", ".join(str(t.shape) for t in entry.inputs)
            lines.append(f"#{i:04d} {entry.op}({shapes}) -> {entry.output.shape}")
        return "\n".join(lines)


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording, even inside an active tape."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap an op result and register its backward rule when needed."""
    if is_debug() and not np.all(np.isfinite(data)):
        raise NumericalError(f"{op} produced non-finite values")
    out = Tensor._result(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(TapeEntry(op, tuple(inputs), out, backward))
    return out
