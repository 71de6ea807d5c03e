"""
Neural network building blocks on top of the autograd tensor.
Weights follow the ``x @ W + b`` convention (W is in_features x out_features).
"""

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from autograd.tensor import Tensor, concat, layer_norm, matmul, relu, softmax
from utils.constants import FFN_MULTIPLIER, LAYER_NORM_EPS
from utils.errors import CheckpointError, ConfigError


class Module:
    """
    Base class that registers Tensor parameters and child modules by attribute.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        """Yield (dotted name, tensor) in registration order."""
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [param for _, param in self.named_parameters()]

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter keyed by dotted name."""
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        """
        Overwrite parameters from a state dict with exactly matching names and shapes.
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise CheckpointError(f"{name}: expected shape {param.shape}, found {value.shape}")
            param.data[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


class Linear(Module):
    """Affine map with an ``init`` of "xavier", "identity" or "zeros"."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        init: str = "xavier",
        bias: bool = True,
    ):
        super().__init__()
        if init == "xavier":
            weight = _xavier(rng, in_features, out_features)
        elif init == "identity":
            if in_features != out_features:
                raise ConfigError("identity init needs a square weight")
            weight = np.eye(in_features)
        elif init == "zeros":
            weight = np.zeros((in_features, out_features))
        else:
            raise ConfigError(f"unknown init '{init}'")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class MLP(Module):
    """
    Two-layer perceptron: Linear -> ReLU -> Linear.
    """

    def __init__(
        self,
        in_features: int,
        hidden: int,
        out_features: int,
        rng: np.random.Generator,
        zero_output: bool = False,
    ):
        """
        Args:
            in_features: Input width
            hidden: Hidden width
            out_features: Output width
            rng: Initialization generator
            zero_output: Start with an all-zero output layer (constant 0 output)
        """
        super().__init__()
        self.hidden = Linear(in_features, hidden, rng)
        self.output = Linear(hidden, out_features, rng, init="zeros" if zero_output else "xavier")

    def forward(self, x: Tensor) -> Tensor:
        return self.output(relu(self.hidden(x)))


class LayerNorm(Module):
    """Layer normalization over the last axis with learned gain and shift."""

    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        super().__init__()
        self.eps = eps
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.eps) * self.gamma + self.beta


class MultiHeadSelfAttention(Module):
    """
    Scaled dot-product self-attention over the rows of an N x d matrix.
    Heads are contiguous column blocks of the projected queries, keys and values.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"{heads} heads do not divide dimension {dim}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        q, k, v = self.query(x), self.key(x), self.value(x)
        scale = 1.0 / math.sqrt(self.head_dim)
        outputs = []
        for h in range(self.heads):
            cols = slice(h * self.head_dim, (h + 1) * self.head_dim)
            qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
            weights = softmax(matmul(qh, kh.T) * scale, axis=-1)
            outputs.append(matmul(weights, vh))
        return self.out(concat(outputs, axis=1))


class TransformerEncoderLayer(Module):
    """
    Post-norm encoder layer:
        h   = LN(x + MHA(x))
        out = LN(h + FFN(h))
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        ffn_multiplier: int = FFN_MULTIPLIER,
    ):
        super().__init__()
        self.attention = MultiHeadSelfAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ffn = MLP(dim, ffn_multiplier * dim, dim, rng)
        self.norm2 = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(x + self.attention(x))
        return self.norm2(h + self.ffn(h))
