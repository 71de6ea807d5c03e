"""
Helper utility functions for cfrag.
Contains small reusable functions for JSON files, hashing and tokenization.
"""

import hashlib
import json
import os
import re
from typing import Any, List

import numpy as np

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def load_json(filepath: str, default: Any = None) -> Any:
    """
    Load a JSON document from disk.

    Args:
        filepath: Path to the JSON file
        default: Value returned when the file does not exist

    Returns:
        Parsed JSON value, or ``default`` if the file is missing
    """
    if not os.path.exists(filepath):
        return default

    with open(filepath, "r", encoding="utf-8") as f:
        return json.load(f)


def save_json(filepath: str, data: Any) -> None:
    """
    Save a JSON document, creating parent directories as needed.

    Args:
        filepath: Path to save the JSON file
        data: JSON-serializable value
    """
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def clamp(value: float, min_value: float, max_value: float) -> float:
    """
    Clamp a value between min and max.

    Args:
        value: Value to clamp
        min_value: Minimum allowed value
        max_value: Maximum allowed value

    Returns:
        Clamped value
    """
    return max(min_value, min(value, max_value))


def tokenize(text: str) -> List[str]:
    """
    Lowercase a text and split it on runs of non-alphanumeric characters.

    Args:
        text: Input text

    Returns:
        List of non-empty tokens
    """
    return [token for token in _TOKEN_SPLIT.split(text.lower()) if token]


def stable_hash64(text: str) -> int:
    """Process-independent unsigned 64-bit hash of a string."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def prompt_key(provider_id: str, prompt: str) -> str:
    """Hex digest identifying a (provider, prompt) pair in the feedback cache."""
    payload = provider_id.encode("utf-8") + b"\x00" + prompt.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def softmax(values: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a 1-D array (max subtracted first)."""
    shifted = np.asarray(values, dtype=np.float64) - np.max(values)
    exp = np.exp(shifted)
    return exp / exp.sum()


def make_rng(seed: int) -> np.random.Generator:
    """Create the numpy generator used everywhere randomness is needed."""
    return np.random.default_rng(seed)
