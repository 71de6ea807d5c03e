"""
Dense tensors with reverse-mode automatic differentiation.
Every trainable module in cfrag is built from the primitives in this file.
Values are float64 numpy arrays; a tensor holding NaN or Inf cannot exist.
"""

import contextvars
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ContractError, DimensionError, NumericError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_GRAD_ENABLED = contextvars.ContextVar("cfrag_grad_enabled", default=True)


class no_grad:
    """
    Context manager that disables graph recording in the current thread.
    Forward passes inside it are pure and may run concurrently.
    """

    def __enter__(self):
        self._token = _GRAD_ENABLED.set(False)
        return self

    def __exit__(self, *exc_info):
        _GRAD_ENABLED.reset(self._token)


def grad_enabled() -> bool:
    """Return True when operations record the computation graph."""
    return _GRAD_ENABLED.get()


class Tensor:
    """
    A dense array of 64-bit reals that can take part in backpropagation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        """
        Initialize a leaf tensor.

        Args:
            data: Values (copied)
            requires_grad: Whether gradients should be accumulated into ``grad``
        """
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=np.float64)
        _check_finite(array, "tensor")
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(array) if self.requires_grad else None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward = None
        self.op = "leaf"

    # Shape helpers

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.data.size != 1:
            raise ContractError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def zero_grad(self):
        """Reset the accumulated gradient to zero."""
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # Operators

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def relu(self) -> "Tensor":
        return relu(self)

    # Backpropagation

    def backward(self) -> Dict["Tensor", np.ndarray]:
        """
        Backpropagate from this scalar into every tensor of its graph.

        Gradients accumulate into ``grad`` across calls; optimizers zero them
        before each training step.

        Returns:
            Map from each leaf that requires grad to its accumulated gradient
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return {}

        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}
        leaves: Dict[Tensor, np.ndarray] = {}

        for node in reversed(order):
            upstream = pending.pop(id(node), None)
            if upstream is None:
                continue
            node.grad += upstream
            if node._backward is None:
                leaves[node] = node.grad
                continue
            parent_grads = node._backward(upstream)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(parent_grad, parent.shape)
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad
        return leaves


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order of the graph under ``root`` (parents before children)."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _check_finite(array: np.ndarray, op: str):
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{op} produced non-finite values")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _lift(value: ArrayLike) -> Tensor:
    """Wrap constants so every operand is a Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    """Create an op output and record it in the graph when needed."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out.requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.grad = np.zeros_like(data)
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.grad = None
        out._parents = ()
        out._backward = None
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from exc


# Elementwise arithmetic

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    x, y = a.data, b.data
    return _result(x * y, (a, b), lambda g: (g * y, g * x), "mul")


def scale(a: ArrayLike, factor: float) -> Tensor:
    """Multiply by a constant real."""
    return mul(a, float(factor))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")
    x, y = a.data, b.data
    if np.any(y == 0.0):
        raise NumericError("div: division by zero")
    out = x / y
    return _result(out, (a, b), lambda g: (g / y, -g * out / y), "div")


def exp(a: ArrayLike) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: ArrayLike) -> Tensor:
    a = _lift(a)
    x = a.data
    if np.any(x <= 0.0):
        raise NumericError("log: non-positive input")
    return _result(np.log(x), (a,), lambda g: (g / x,), "log")


def relu(a: ArrayLike) -> Tensor:
    a = _lift(a)
    mask = a.data > 0.0
    return _result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


# Linear algebra and shape

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product for 1-D and 2-D operands (vectors are rows on the left,
    columns on the right).
    """
    a, b = _lift(a), _lift(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    left = a.data.reshape(1, -1) if a.ndim == 1 else a.data
    right = b.data.reshape(-1, 1) if b.ndim == 1 else b.data
    product = left @ right

    if a.ndim == 1 and b.ndim == 1:
        out = product.reshape(())
    elif a.ndim == 1:
        out = product.reshape(-1)
    elif b.ndim == 1:
        out = product.reshape(-1)
    else:
        out = product

    def backward(g):
        g2 = np.asarray(g).reshape(left.shape[0], right.shape[1])
        return (g2 @ right.T).reshape(a.shape), (left.T @ g2).reshape(b.shape)

    return _result(out, (a, b), backward, "matmul")


def transpose(a: ArrayLike) -> Tensor:
    a = _lift(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = _lift(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from exc
    original = a.shape
    return _result(out.copy(), (a,), lambda g: (g.reshape(original),), "reshape")


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """Concatenate along an existing axis."""
    parts = [_lift(t) for t in tensors]
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[p.shape for p in parts]} along axis {axis}") from exc
    boundaries = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, boundaries, axis=axis))

    return _result(out, parts, backward, "concat")


def getitem(a: ArrayLike, index) -> Tensor:
    """Basic or advanced indexing; gradients scatter back with repetition."""
    a = _lift(a)
    try:
        out = np.array(a.data[index], dtype=np.float64)
    except IndexError as exc:
        raise DimensionError(f"index {index!r} out of range for shape {a.shape}") from exc
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(out, (a,), backward, "getitem")


def tensor_sum(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(out, (a,), backward, "sum")


def tensor_mean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def mean_rows(a: ArrayLike) -> Tensor:
    """Average over the first axis (rows)."""
    return tensor_mean(a, axis=0)


# Normalizations

def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max-subtraction."""
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward, "softmax")


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), backward, "log_softmax")


def logsumexp(a: ArrayLike, axis: int = -1) -> Tensor:
    """log(sum(exp(a))) along ``axis`` (the axis is removed)."""
    a = _lift(a)
    peak = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - peak)
    total = e.sum(axis=axis, keepdims=True)
    out = (peak + np.log(total)).squeeze(axis=axis)
    probs = e / total

    def backward(g):
        return (np.expand_dims(g, axis) * probs,)

    return _result(out, (a,), backward, "logsumexp")


def layer_norm(a: ArrayLike, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    a = _lift(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    out = centered * inv_std

    def backward(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gx_mean = (g * out).mean(axis=-1, keepdims=True)
        return (inv_std * (g - g_mean - out * gx_mean),)

    return _result(out, (a,), backward, "layer_norm")


def normalize(a: ArrayLike, axis: int = -1) -> Tensor:
    """Scale vectors along ``axis`` to unit Euclidean norm."""
    a = _lift(a)
    norm = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    if np.any(norm < 1e-12):
        raise NumericError("normalize: zero-norm vector")
    out = a.data / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return _result(out, (a,), backward, "normalize")


def cosine(a: ArrayLike, b: ArrayLike, axis: int = -1) -> Tensor:
    """Cosine similarity along ``axis`` (broadcasting rows against a vector works)."""
    return tensor_sum(mul(normalize(a, axis=axis), normalize(b, axis=axis)), axis=axis)
