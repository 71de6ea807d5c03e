"""
History augmentations for contrastive user-embedding training.

Histories are sequences of row indices into a user's document-embedding matrix;
masked positions hold MASK_TOKEN.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, TypeVar

import numpy as np

from utils.constants import CROP_RATIO, MASK_RATIO, REORDER_RATIO
from utils.errors import ConfigError

T = TypeVar("T")

MASK_TOKEN = -1
METHODS = ("crop", "mask", "reorder")


@dataclass
class AugmentationConfig:
    crop_ratio: float = CROP_RATIO
    mask_ratio: float = MASK_RATIO
    reorder_ratio: float = REORDER_RATIO

    def __post_init__(self):
        for name in ("crop_ratio", "mask_ratio", "reorder_ratio"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")


def _span(ratio: float, n: int) -> int:
    # Guard against 0.7 * 10 == 6.999...
    return int(math.floor(ratio * n + 1e-9))


def augment_crop(history: Sequence[T], ratio: float, rng: np.random.Generator) -> List[T]:
    """Contiguous slice of length max(1, floor(ratio * N)) at a uniform start."""
    n = len(history)
    length = max(1, _span(ratio, n))
    start = int(rng.integers(0, n - length + 1))
    return list(history[start:start + length])


def augment_mask(
    history: Sequence[T],
    ratio: float,
    rng: np.random.Generator,
    mask_token=MASK_TOKEN,
) -> List[T]:
    """Replace floor(ratio * N) distinct uniform positions with ``mask_token``."""
    n = len(history)
    count = _span(ratio, n)
    masked = list(history)
    if count == 0:
        return masked
    for position in rng.choice(n, size=count, replace=False):
        masked[int(position)] = mask_token
    return masked


def augment_reorder(history: Sequence[T], ratio: float, rng: np.random.Generator) -> List[T]:
    """Shuffle a contiguous window of length floor(ratio * N)."""
    n = len(history)
    length = _span(ratio, n)
    reordered = list(history)
    if length <= 1:
        return reordered
    start = int(rng.integers(0, n - length + 1))
    window = reordered[start:start + length]
    reordered[start:start + length] = [window[i] for i in rng.permutation(length)]
    return reordered


def choose_methods(rng: np.random.Generator) -> Tuple[str, str]:
    """Two distinct augmentation methods, uniformly without replacement."""
    first, second = rng.choice(len(METHODS), size=2, replace=False)
    return METHODS[int(first)], METHODS[int(second)]


def apply_method(method: str, history: Sequence[T], config: AugmentationConfig, rng: np.random.Generator) -> List[T]:
    if method == "crop":
        return augment_crop(history, config.crop_ratio, rng)
    if method == "mask":
        return augment_mask(history, config.mask_ratio, rng)
    if method == "reorder":
        return augment_reorder(history, config.reorder_ratio, rng)
    raise ConfigError(f"unknown augmentation '{method}'")


def sample_views(
    history: Sequence[T],
    config: AugmentationConfig,
    rng: np.random.Generator,
) -> Tuple[List[T], List[T]]:
    """Two views of one history made by two different augmentations."""
    first, second = choose_methods(rng)
    return apply_method(first, history, config, rng), apply_method(second, history, config, rng)
