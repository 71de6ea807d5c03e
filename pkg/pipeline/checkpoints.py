"""
Versioned binary checkpoints for the three trained models.

Layout (little-endian):
    8 bytes magic, u32 version, u32 d, u32 tensor count,
    per tensor: u16 name length, name (UTF-8), u32 ndim, ndim x u32 dims,
                float64 values in C order
"""

import logging
import os
import struct
from typing import Dict

import numpy as np

from autograd.layers import Module
from models.reranker import Reranker
from models.retriever import Retriever
from models.user_encoder import UserEncoder
from utils.constants import CHECKPOINT_VERSION, RERANKER_MAGIC, RETRIEVER_MAGIC, USER_ENCODER_MAGIC
from utils.errors import CheckpointError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sIII")


def save_checkpoint(path: str, magic: bytes, dim: int, tensors: Dict[str, np.ndarray]):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(magic, CHECKPOINT_VERSION, dim, len(tensors)))
        for name, value in tensors.items():
            value = np.asarray(value, dtype="<f8", order="C")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", value.ndim))
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
            f.write(value.tobytes())
    logger.debug("Wrote checkpoint %s (%d tensors)", path, len(tensors))


def load_checkpoint(path: str, magic: bytes, dim: int) -> Dict[str, np.ndarray]:
    """Read a checkpoint, checking magic, version and dimension."""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint {path} does not exist")
    with open(path, "rb") as f:
        payload = f.read()

    try:
        found_magic, version, found_dim, count = _HEADER.unpack_from(payload, 0)
        if found_magic != magic:
            raise CheckpointError(f"{path}: expected magic {magic!r}, found {found_magic!r}")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        if found_dim != dim:
            raise CheckpointError(f"{path}: checkpoint dimension {found_dim} does not match configured {dim}")

        tensors: Dict[str, np.ndarray] = {}
        offset = _HEADER.size
        for _ in range(count):
            (length,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset:offset + length].decode("utf-8")
            offset += length
            (ndim,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", payload, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
            offset += 8 * size
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint") from exc
    return tensors


def save_user_encoder(path: str, encoder: UserEncoder):
    save_checkpoint(path, USER_ENCODER_MAGIC, encoder.dim, encoder.state_dict())


def load_user_encoder(path: str, dim: int, max_history: int, heads: int, layers: int) -> UserEncoder:
    encoder = UserEncoder(dim, max_history, make_rng(0), heads=heads, layers=layers)
    encoder.load_state_dict(load_checkpoint(path, USER_ENCODER_MAGIC, dim))
    return encoder


def save_retriever(path: str, retriever: Retriever):
    tensors = retriever.state_dict()
    tensors["alpha"] = np.array([retriever.alpha])
    save_checkpoint(path, RETRIEVER_MAGIC, retriever.dim, tensors)


def load_retriever(path: str, dim: int) -> Retriever:
    tensors = load_checkpoint(path, RETRIEVER_MAGIC, dim)
    if "alpha" not in tensors:
        raise CheckpointError(f"{path}: missing alpha")
    alpha = float(tensors.pop("alpha").reshape(-1)[0])
    retriever = Retriever(dim, make_rng(0), alpha=alpha)
    retriever.load_state_dict(tensors)
    return retriever


def save_reranker(path: str, reranker: Reranker):
    save_checkpoint(path, RERANKER_MAGIC, reranker.dim, reranker.state_dict())


def load_reranker(path: str, dim: int) -> Reranker:
    reranker = Reranker(dim, make_rng(0))
    reranker.load_state_dict(load_checkpoint(path, RERANKER_MAGIC, dim))
    return reranker


def copy_module(module: Module, clone: Module) -> Module:
    """Load ``module``'s weights into ``clone`` (same architecture)."""
    clone.load_state_dict(module.state_dict())
    return clone
