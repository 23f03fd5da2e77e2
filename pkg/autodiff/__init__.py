from autodiff import ops
from autodiff.gradcheck import GradCheckReport, grad_check
from autodiff.optim import Adam, step_decay_lr
from autodiff.tensor import (
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    get_dtype,
    is_debug,
    no_grad,
    precision,
    set_debug,
    set_precision,
)

__all__ = [
    "ops",
    "Adam",
    "GradCheckReport",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "get_dtype",
    "grad_check",
    "is_debug",
    "no_grad",
    "precision",
    "set_debug",
    "set_precision",
    "step_decay_lr",
]
