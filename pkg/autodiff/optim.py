"""Adam with decoupled weight decay and the step learning-rate schedule."""

from typing import Dict

import numpy as np

from autodiff.tensor import Tensor
from utils.errors import CheckpointError


def step_decay_lr(base_lr: float, epoch: int, decay: float = 0.8, every: int = 3) -> float:
    """Learning rate in effect during ``epoch`` (0-based)."""
    return base_lr * decay ** (epoch // every)


class Adam:
    """Adam over a named parameter set; the l2 penalty is applied as decay."""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 0.001,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                # untouched this step: decay still applies
                if self.weight_decay:
                    p.data -= p.data.dtype.type(self.lr * self.weight_decay) * p.data
                continue
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= (self.lr * update).astype(p.data.dtype)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Moment buffers keyed ``adam.m.<name>`` / ``adam.v.<name>``."""
        state = {}
        for name in self.params:
            state[f"adam.m.{name}"] = self.m[name]
            state[f"adam.v.{name}"] = self.v[name]
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], step_count: int):
        for name, p in self.params.items():
            for kind, target in (("m", self.m), ("v", self.v)):
                key = f"adam.{kind}.{name}"
                if key not in state:
                    raise CheckpointError(f"optimizer state missing {key}")
                if state[key].shape != p.data.shape:
                    raise CheckpointError(
                        f"optimizer state {key} has shape {state[key].shape}, expected {p.data.shape}"
                    )
                target[name] = state[key].astype(p.data.dtype, copy=True)
        self.step_count = int(step_count)
