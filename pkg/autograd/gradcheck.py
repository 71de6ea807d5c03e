"""
Central finite-difference check of autodiff gradients.
"""

import logging
import math
from typing import Callable, Sequence

from autograd.tensor import Tensor
from utils.errors import NumericError

logger = logging.getLogger(__name__)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    atol: float = 0.0,
) -> float:
    """
    Compare backpropagated gradients with central differences.

    ``f`` is re-evaluated after each coordinate is perturbed in place, so it
    must read the current values of ``params``. The check reports and never
    raises: a NumericError inside ``f`` yields an infinite error.

    Args:
        f: Zero-argument function returning a scalar loss tensor
        params: Leaf tensors with requires_grad set
        eps: Perturbation size
        atol: Coordinates where both gradients are below this in magnitude
            are skipped (structurally zero gradients carry only rounding noise)

    Returns:
        max over coordinates of |autodiff - numeric| / (|numeric| + 1e-12)
    """
    try:
        return _worst_relative_error(f, params, eps, atol)
    except NumericError as exc:
        logger.warning("Gradient check failed: %s", exc)
        return math.inf


def _worst_relative_error(f, params, eps: float, atol: float) -> float:
    for param in params:
        param.zero_grad()
    f().backward()
    analytic = [param.grad.copy() for param in params]

    worst = 0.0
    for param, grad in zip(params, analytic):
        flat = param.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            try:
                flat[i] = original + eps
                plus = f().item()
                flat[i] = original - eps
                minus = f().item()
            finally:
                flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            if abs(flat_grad[i]) < atol and abs(numeric) < atol:
                continue
            error = abs(flat_grad[i] - numeric) / (abs(numeric) + 1e-12)
            worst = max(worst, float(error))
    return worst
