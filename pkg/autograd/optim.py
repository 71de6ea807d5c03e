"""
Adam optimizer for cfrag parameters.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from autograd.tensor import Tensor
from utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from utils.errors import ConfigError, DimensionError


@dataclass
class AdamState:
    """First/second moments per parameter plus the shared step counter."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
            **hyper,
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> List[np.ndarray]:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        params: Parameter arrays (modified in place)
        grads: Gradients matching ``params``
        state: Moments and step counter (advanced by one)
        lr: Learning rate, must be positive

    Returns:
        The updated parameter arrays
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (len(params) == len(grads) == len(state.m)):
        raise DimensionError("adam_step: params, grads and state disagree in length")

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t

    for i, (param, grad) in enumerate(zip(params, grads)):
        if param.shape != grad.shape or param.shape != state.m[i].shape:
            raise DimensionError(f"adam_step: shape mismatch at parameter {i}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return list(params)


class Adam:
    """
    Adam over a fixed list of leaf tensors.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, **hyper):
        """
        Initialize the optimizer.

        Args:
            params: Leaf tensors with requires_grad set
            lr: Learning rate (0 turns ``step`` into a no-op)
        """
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.for_params([p.data for p in self.params], **hyper)

    def zero_grad(self):
        """Clear gradients before a new step."""
        for param in self.params:
            param.zero_grad()

    def step(self):
        """Update every parameter from its accumulated gradient."""
        if self.lr == 0:
            return
        adam_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            self.lr,
        )
