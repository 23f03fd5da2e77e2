"""Finite-difference verification of tape gradients."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from autodiff.tensor import Tape, Tensor, no_grad
from utils.logging import get_logger

logger = get_logger(__name__)

REL_FLOOR = 1e-12


@dataclass
class GradCheckReport:
    """Relative gradient error per parameter tensor."""

    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failures(self) -> Dict[str, float]:
        return {k: v for k, v in self.errors.items() if v >= self.tolerance}


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| over the larger of ||a||, ||b||; zero when both vanish."""
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if scale < REL_FLOOR:
        return 0.0
    return float(np.linalg.norm(a - b)) / scale


def grad_check(
    f: Callable[[], Tensor],
    params: Dict[str, Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` with central differences.

    ``f`` must rebuild its result from the current values of ``params`` on
    every call. With ``max_entries`` only a seeded sample of each tensor's
    entries is perturbed.
    """
    report = GradCheckReport(tolerance=tolerance)
    if not params:
        return report

    for name, p in params.items():
        if p.data.dtype != np.float64:
            logger.warning(f"grad_check on {name} in {p.data.dtype}; results need float64")
        p.zero_grad()

    with Tape() as tape:
        loss = f()
        tape.backward(loss)

    rng = np.random.default_rng(seed)
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        numeric = np.empty(entries.size, dtype=np.float64)
        with no_grad():
            for k, idx in enumerate(entries):
                original = flat[idx]
                flat[idx] = original + h
                up = f().item()
                flat[idx] = original - h
                down = f().item()
                flat[idx] = original
                numeric[k] = (up - down) / (2.0 * h)

        report.errors[name] = relative_error(analytic.reshape(-1)[entries], numeric)

    logger.debug(f"grad_check max relative error {report.max_error:.3e} over {len(params)} tensors")
    return report
