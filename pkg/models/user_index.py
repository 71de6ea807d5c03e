"""
Index of unit-norm user embeddings and similar-user retrieval.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from autograd.tensor import Tensor, no_grad
from corpus.cache import read_embedding_cache, write_embedding_cache
from corpus.dataset import UserProfile
from corpus.embeddings import EmbeddingProvider
from models.user_encoder import UserEncoder, history_matrix
from utils.errors import ConfigError, ContractError, NumericError, UserLookupError

logger = logging.getLogger(__name__)

SELECTIONS = ("top_m", "random", "top_m_to_2m")


@dataclass
class UserIndex:
    user_ids: List[str]
    matrix: np.ndarray  # one unit row per user

    def __post_init__(self):
        self._rows = {uid: i for i, uid in enumerate(self.user_ids)}

    def __len__(self) -> int:
        return len(self.user_ids)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._rows

    def embedding(self, user_id: str) -> np.ndarray:
        if user_id not in self._rows:
            raise UserLookupError(f"user '{user_id}' is not in the index")
        return self.matrix[self._rows[user_id]].copy()


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericError("user embedding with zero norm")
    return matrix / norms


def build_user_index(
    encoder: UserEncoder,
    profiles: Dict[str, UserProfile],
    provider: EmbeddingProvider,
) -> UserIndex:
    """Encode every user's (truncated) history with the frozen encoder."""
    rows = []
    with no_grad():
        for profile in profiles.values():
            documents = history_matrix(profile, provider, encoder.max_history)
            rows.append(encoder(Tensor(documents)).numpy())
    index = UserIndex(list(profiles), _unit_rows(np.stack(rows)))
    logger.info("Built user index with %d users", len(index))
    return index


def build_mean_user_index(profiles: Dict[str, UserProfile], provider: EmbeddingProvider) -> UserIndex:
    """User embedding = mean of the raw document embeddings (no encoder)."""
    rows = [provider.embed_documents(profile.history).mean(axis=0) for profile in profiles.values()]
    return UserIndex(list(profiles), _unit_rows(np.stack(rows)))


def rank_users(index: UserIndex, user_id: str) -> List[str]:
    """
    All users by similarity to ``user_id``: the user first, then the others
    by descending cosine with ties on ascending user id.
    """
    query = index.embedding(user_id)
    similarities = index.matrix @ query
    others = sorted(
        (uid for uid in index.user_ids if uid != user_id),
        key=lambda uid: (-similarities[index._rows[uid]], uid),
    )
    return [user_id] + others


def retrieve_users(
    index: UserIndex,
    user_id: str,
    m: int,
    selection: str = "top_m",
    rng: Optional[np.random.Generator] = None,
) -> List[str]:
    """
    Select m users for collaborative retrieval; the querying user always comes first.

    Args:
        index: User index
        user_id: Querying user
        m: Number of users (1 <= m <= len(index))
        selection: "top_m", "random" (the user plus m-1 uniform others), or
            "top_m_to_2m" (the user plus the m-1 users ranked just after the top m)
        rng: Required for "random"
    """
    if m < 1:
        raise ContractError(f"m must be >= 1, got {m}")
    if m > len(index):
        raise ContractError(f"m={m} exceeds the {len(index)} indexed users")
    ranking = rank_users(index, user_id)

    if selection == "top_m":
        return ranking[:m]
    if selection == "top_m_to_2m":
        return [user_id] + ranking[m:2 * m - 1]
    if selection == "random":
        if rng is None:
            raise ContractError("random user selection needs a generator")
        others = ranking[1:]
        chosen = rng.choice(len(others), size=m - 1, replace=False) if m > 1 else []
        return [user_id] + [others[int(i)] for i in chosen]
    raise ConfigError(f"unknown user selection '{selection}'")


def save_user_index(path: str, index: UserIndex):
    write_embedding_cache(path, {uid: index.matrix[i] for i, uid in enumerate(index.user_ids)})


def load_user_index(path: str, dim: int) -> UserIndex:
    entries = read_embedding_cache(path, expected_dim=dim)
    matrix = np.stack([vector.astype(np.float64) for vector in entries.values()])
    return UserIndex(list(entries), _unit_rows(matrix))
