"""
Cross featurizers: one feature vector h_qd per (query, document) pair.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import List, Sequence, Tuple

import httpx
import numpy as np

from corpus.embeddings import hash_embed
from utils.constants import MAX_RETRIES, REQUEST_TIMEOUT
from utils.errors import ContractError, DimensionError
from utils.retry import call_with_retries

logger = logging.getLogger(__name__)


class CrossFeaturizer(ABC):
    def __init__(self, dim: int):
        self.dim = dim

    @abstractmethod
    def featurize_many(self, query: str, documents: Sequence[str]) -> np.ndarray:
        """len(documents) x dim features for one query."""

    def featurize(self, query: str, document: str) -> np.ndarray:
        return self.featurize_many(query, [document])[0]


class MockCrossFeaturizer(CrossFeaturizer):
    """
    Deterministic pair features from hash embeddings q and x:
        h = normalize((q . x) / sqrt(d) * 1 + q * x + |q - roll(x, 1)| / 2)
    """

    def pair_features(self, q: np.ndarray, x: np.ndarray) -> np.ndarray:
        relevance = float(q @ x) / math.sqrt(self.dim)
        h = relevance * np.ones(self.dim) + q * x + 0.5 * np.abs(q - np.roll(x, 1))
        norm = np.linalg.norm(h)
        if norm == 0.0:
            h = np.zeros(self.dim)
            h[0] = 1.0
            return h
        return h / norm

    def featurize_many(self, query: str, documents: Sequence[str]) -> np.ndarray:
        if not query or any(not doc for doc in documents):
            raise ContractError("cross features need nonempty texts")
        q = hash_embed(query, self.dim)
        return np.stack([self.pair_features(q, hash_embed(doc, self.dim)) for doc in documents])


class RemoteCrossFeaturizer(CrossFeaturizer):
    """
    Cross-encoder service: POST {"pairs": [[query, document], ...]} and
    receive {"vectors": [[...], ...]}.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int,
        client: httpx.Client = None,
        max_retries: int = MAX_RETRIES,
        timeout: float = REQUEST_TIMEOUT,
        backoff_factor: float = 1.0,
    ):
        super().__init__(dim)
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff_factor = backoff_factor
        self.client = client or httpx.Client(timeout=timeout)

    def _post(self, pairs: List[Tuple[str, str]]) -> dict:
        response = self.client.post(self.endpoint, json={"pairs": [list(p) for p in pairs]})
        response.raise_for_status()
        return response.json()

    def featurize_many(self, query: str, documents: Sequence[str]) -> np.ndarray:
        pairs = [(query, doc) for doc in documents]
        payload = call_with_retries(
            lambda: self._post(pairs),
            (httpx.TransportError, httpx.HTTPStatusError),
            f"cross-encoder request ({len(pairs)} pairs)",
            max_tries=self.max_retries,
            factor=self.backoff_factor,
        )
        vectors = np.asarray(payload.get("vectors", []), dtype=np.float64)
        if vectors.shape != (len(documents), self.dim):
            raise DimensionError(f"cross-encoder returned shape {vectors.shape}, expected {(len(documents), self.dim)}")
        return vectors


def cross_features(featurizer: CrossFeaturizer, query: str, document: str) -> np.ndarray:
    return featurizer.featurize(query, document)
