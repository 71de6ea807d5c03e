"""
Document embedding providers.

Every provider returns unit-norm float64 vectors of its dimension and is pure:
the same input always maps to the same vector.
"""

import logging
import os
import threading
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import openai

from corpus.cache import read_embedding_cache, write_embedding_cache
from corpus.dataset import Document
from utils.constants import EMBED_TOKEN_ENV, MAX_RETRIES, REQUEST_TIMEOUT
from utils.errors import ConfigError, ContractError, DimensionError, NumericError
from utils.helpers import stable_hash64, tokenize
from utils.retry import call_with_retries

logger = logging.getLogger(__name__)


def hash_embed(text: str, dim: int) -> np.ndarray:
    """
    Signed feature hashing of a text's tokens, L2-normalized.

    Each token adds +1 or -1 (bit 32 of its hash) to bucket ``hash % dim``.
    An empty token set, or buckets that cancel to zero, yields e1.
    """
    if dim <= 0:
        raise ContractError(f"embedding dimension must be positive, got {dim}")
    vector = np.zeros(dim)
    for token in tokenize(text):
        h = stable_hash64(token)
        vector[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        fallback = np.zeros(dim)
        fallback[0] = 1.0
        return fallback
    return vector / norm


def _unit(vector: np.ndarray, source: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(vector)
    if not np.isfinite(norm) or norm == 0.0:
        raise NumericError(f"{source} returned a zero or non-finite vector")
    return vector / norm


class EmbeddingProvider(ABC):
    """
    Maps texts and documents to unit vectors of dimension ``dim``.
    """

    def __init__(self, dim: int):
        if dim <= 0:
            raise ContractError(f"embedding dimension must be positive, got {dim}")
        self.dim = dim

    @property
    @abstractmethod
    def provider_id(self) -> str:
        """Stable identifier used in cache keys and reports."""

    @abstractmethod
    def embed_text(self, text: str) -> np.ndarray:
        """Embed a free text (queries)."""

    def embed_document(self, doc: Document) -> np.ndarray:
        """Embed a history document."""
        return self.embed_text(doc.text)

    def embed_documents(self, docs: Sequence[Document]) -> np.ndarray:
        """Stack document embeddings into a len(docs) x dim matrix."""
        if not docs:
            return np.zeros((0, self.dim))
        return np.stack([self.embed_document(doc) for doc in docs])


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic feature-hashing provider."""

    @property
    def provider_id(self) -> str:
        return f"hash-{self.dim}"

    def embed_text(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dim)


class PrecomputedEmbeddingProvider(EmbeddingProvider):
    """
    Looks documents up by id in an embedding cache file.
    Free texts go to ``fallback`` when one is given.
    """

    def __init__(self, path: str, dim: int, fallback: Optional[EmbeddingProvider] = None):
        super().__init__(dim)
        self.path = path
        self.fallback = fallback
        self.vectors = {
            key: value.astype(np.float64) for key, value in read_embedding_cache(path, expected_dim=dim).items()
        }
        logger.info("Loaded %d precomputed embeddings from %s", len(self.vectors), path)

    @property
    def provider_id(self) -> str:
        return f"precomputed:{os.path.basename(self.path)}"

    def embed_document(self, doc: Document) -> np.ndarray:
        if doc.id in self.vectors:
            return self.vectors[doc.id].copy()
        if self.fallback is not None:
            return self.fallback.embed_document(doc)
        raise ContractError(f"document '{doc.id}' has no precomputed embedding")

    def embed_text(self, text: str) -> np.ndarray:
        if text in self.vectors:
            return self.vectors[text].copy()
        if self.fallback is None:
            raise ContractError("precomputed provider has no fallback for free text")
        return self.fallback.embed_text(text)


class RemoteEmbeddingProvider(EmbeddingProvider):
    """
    Embedding service speaking the OpenAI embeddings protocol
    (a list of texts in, a list of vectors out).
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        client=None,
        max_retries: int = MAX_RETRIES,
        timeout: float = REQUEST_TIMEOUT,
        backoff_factor: float = 1.0,
    ):
        super().__init__(dim)
        self.model = model
        self.max_retries = max_retries
        self.backoff_factor = backoff_factor
        if client is None:
            client = openai.OpenAI(
                base_url=base_url,
                api_key=os.environ.get(EMBED_TOKEN_ENV, "unused"),
                timeout=timeout,
                max_retries=0,
            )
        self.client = client

    @property
    def provider_id(self) -> str:
        return f"remote:{self.model}"

    def _retryable(self) -> Tuple[type, ...]:
        return (openai.APIConnectionError, openai.APITimeoutError, openai.RateLimitError, openai.InternalServerError)

    def embed_batch(self, texts: List[str]) -> np.ndarray:
        """Embed several texts with one request."""
        response = call_with_retries(
            lambda: self.client.embeddings.create(model=self.model, input=texts),
            self._retryable(),
            f"embedding request ({len(texts)} texts)",
            max_tries=self.max_retries,
            factor=self.backoff_factor,
        )
        vectors = [_unit(item.embedding, self.provider_id) for item in response.data]
        if len(vectors) != len(texts):
            raise DimensionError(f"embedding service returned {len(vectors)} vectors for {len(texts)} texts")
        for vector in vectors:
            if vector.size != self.dim:
                raise DimensionError(f"embedding service returned dimension {vector.size}, expected {self.dim}")
        return np.stack(vectors)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_documents(self, docs: Sequence[Document]) -> np.ndarray:
        if not docs:
            return np.zeros((0, self.dim))
        return self.embed_batch([doc.text for doc in docs])


class CachedEmbeddingProvider(EmbeddingProvider):
    """
    In-memory memoization of another provider, shareable across threads.
    Document vectors can be flushed to an embedding cache file.
    """

    def __init__(self, inner: EmbeddingProvider):
        super().__init__(inner.dim)
        self.inner = inner
        self._texts: Dict[str, np.ndarray] = {}
        self._docs: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def provider_id(self) -> str:
        return self.inner.provider_id

    def _lookup(self, table: Dict[str, np.ndarray], key: str, compute) -> np.ndarray:
        with self._lock:
            cached = table.get(key)
            if cached is not None:
                self.hits += 1
                return cached.copy()
        vector = compute()
        with self._lock:
            self.misses += 1
            table.setdefault(key, vector.copy())
        return vector

    def embed_text(self, text: str) -> np.ndarray:
        return self._lookup(self._texts, text, lambda: self.inner.embed_text(text))

    def embed_document(self, doc: Document) -> np.ndarray:
        return self._lookup(self._docs, doc.id, lambda: self.inner.embed_document(doc))

    def save(self, path: str) -> int:
        """Write the cached document vectors; returns the record count."""
        with self._lock:
            snapshot = dict(self._docs)
        write_embedding_cache(path, snapshot)
        logger.debug("Wrote %d cached document embeddings to %s", len(snapshot), path)
        return len(snapshot)


def embed_document(provider: EmbeddingProvider, doc: Document) -> np.ndarray:
    """Embed one history document with ``provider``."""
    if not doc.text:
        raise ContractError(f"document '{doc.id}' has empty text")
    return provider.embed_document(doc)


def build_provider(kind: str, dim: int, endpoint: str = "", model: str = "", path: str = "") -> EmbeddingProvider:
    """Construct a provider from configuration values, wrapped in a memory cache."""
    hashed = HashEmbeddingProvider(dim)
    if kind == "hash":
        inner = hashed
    elif kind == "precomputed":
        inner = PrecomputedEmbeddingProvider(path, dim, fallback=hashed)
    elif kind == "remote":
        inner = RemoteEmbeddingProvider(endpoint, model, dim)
    else:
        raise ConfigError(f"unknown embedding provider '{kind}'")
    return CachedEmbeddingProvider(inner)
