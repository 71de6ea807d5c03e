"""
Binary embedding cache.

Layout (little-endian):
    8 bytes  magic "CFRAGEMB"
    u32      dimension d
    u32      record count
    per record: u16 id length, id bytes (UTF-8), d float32 values
"""

import os
import struct
from typing import Dict, Mapping, Optional

import numpy as np

from utils.constants import EMBEDDING_CACHE_MAGIC
from utils.errors import DimensionError, FormatError

_HEADER = struct.Struct("<8sII")
_ID_LENGTH = struct.Struct("<H")


def write_embedding_cache(path: str, entries: Mapping[str, np.ndarray]) -> None:
    """
    Write vectors keyed by id. All vectors must share one dimension.
    """
    vectors = {key: np.asarray(value, dtype="<f4").reshape(-1) for key, value in entries.items()}
    dims = {vector.size for vector in vectors.values()}
    if len(dims) > 1:
        raise DimensionError(f"embedding cache entries have mixed dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "wb") as f:
        f.write(_HEADER.pack(EMBEDDING_CACHE_MAGIC, dim, len(vectors)))
        for key, vector in vectors.items():
            encoded = key.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise FormatError(f"id too long for the cache format: {key[:32]}...")
            f.write(_ID_LENGTH.pack(len(encoded)))
            f.write(encoded)
            f.write(vector.tobytes())


def read_embedding_cache(path: str, expected_dim: Optional[int] = None) -> Dict[str, np.ndarray]:
    """
    Read a cache file.

    Args:
        path: Cache file
        expected_dim: Reject files whose header declares another dimension

    Returns:
        float32 vectors keyed by id, in file order
    """
    with open(path, "rb") as f:
        payload = f.read()

    if len(payload) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, dim, count = _HEADER.unpack_from(payload, 0)
    if magic != EMBEDDING_CACHE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"{path}: cache dimension {dim} does not match configured {expected_dim}")

    entries: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    vector_bytes = 4 * dim
    try:
        for _ in range(count):
            (length,) = _ID_LENGTH.unpack_from(payload, offset)
            offset += _ID_LENGTH.size
            key = payload[offset:offset + length].decode("utf-8")
            offset += length
            if offset + vector_bytes > len(payload):
                raise FormatError(f"{path}: truncated record '{key}'")
            entries[key] = np.frombuffer(payload, dtype="<f4", count=dim, offset=offset).copy()
            offset += vector_bytes
    except struct.error as exc:
        raise FormatError(f"{path}: truncated record table") from exc
    return entries
