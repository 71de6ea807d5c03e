"""
Personalized first-stage retriever.

    semantic   = cos(query_proj(q), doc_proj(d))
    preference = cos(user_mlp(u), doc_proj(d))
    combined   = (1 - alpha) * semantic + alpha * preference

Both projections start as identity maps over the frozen base embeddings, so an
untrained retriever ranks by plain embedding cosine.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from autograd.layers import MLP, Linear, Module
from autograd.tensor import Tensor, cosine, no_grad
from corpus.dataset import Document, Sample
from models.distill import (
    DistillConfig, DistillExample, candidate_distribution, kl_divergence, run_distillation,
)
from utils.constants import ALPHA
from utils.errors import ConfigError, ContractError, DimensionError, FeedbackError, TrainingError

logger = logging.getLogger(__name__)

CANDIDATE_MODES = ("personalized", "semantic", "pretrained")


class Retriever(Module):
    def __init__(self, dim: int, rng: np.random.Generator, alpha: float = ALPHA):
        super().__init__()
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
        self.dim = dim
        self.alpha = float(alpha)
        self.query_proj = Linear(dim, dim, rng, init="identity", bias=False)
        self.doc_proj = Linear(dim, dim, rng, init="identity", bias=False)
        self.user_mlp = MLP(dim, dim, dim, rng)

    def _check(self, vector: np.ndarray, name: str):
        if vector.shape[-1] != self.dim:
            raise DimensionError(f"{name} has dimension {vector.shape[-1]}, expected {self.dim}")

    def semantic_scores(self, query_vec: np.ndarray, documents: np.ndarray) -> Tensor:
        """S_qd for each row of ``documents`` (n x d)."""
        self._check(query_vec, "query")
        self._check(documents, "documents")
        return cosine(self.doc_proj(Tensor(documents)), self.query_proj(Tensor(query_vec)))

    def preference_scores(self, user_vec: np.ndarray, documents: np.ndarray) -> Tensor:
        """
        S_ud for each row of ``documents``. When the user MLP outputs the zero
        vector (no active hidden unit, zero output bias) every S_ud is 0.
        """
        self._check(user_vec, "user embedding")
        self._check(documents, "documents")
        preference = self.user_mlp(Tensor(user_vec))
        if not np.any(preference.data):
            return Tensor(np.zeros(np.asarray(documents).shape[:-1]))
        return cosine(self.doc_proj(Tensor(documents)), preference)

    def combined_scores(self, query_vec: np.ndarray, user_vec: np.ndarray, documents: np.ndarray) -> Tensor:
        """S_uqd for each row of ``documents``; at alpha = 0 the user MLP is not evaluated."""
        semantic = self.semantic_scores(query_vec, documents)
        if self.alpha == 0.0:
            return semantic
        return combined_score(self, semantic, self.preference_scores(user_vec, documents))


def semantic_score(retriever: Retriever, query_vec: np.ndarray, doc_vec: np.ndarray) -> float:
    with no_grad():
        return retriever.semantic_scores(query_vec, doc_vec.reshape(1, -1)).item()


def preference_score(retriever: Retriever, user_vec: np.ndarray, doc_vec: np.ndarray) -> float:
    with no_grad():
        return retriever.preference_scores(user_vec, doc_vec.reshape(1, -1)).item()


def combined_score(retriever: Retriever, s_qd, s_ud):
    """Convex blend of the two scores; works on floats and tensors."""
    return s_qd * (1.0 - retriever.alpha) + s_ud * retriever.alpha


@dataclass(frozen=True, eq=False)
class ScoredCandidate:
    owner: str
    document: Document
    vector: np.ndarray
    semantic: float
    preference: float
    combined: float
    ranking_score: float  # the score candidates were selected by


@dataclass
class UserHistory:
    """A retrieved user's documents and their base embeddings."""

    user_id: str
    documents: List[Document]
    vectors: np.ndarray


def retrieve_topk_per_user(
    retriever: Retriever,
    query_vec: np.ndarray,
    user_vec: np.ndarray,
    pool: Sequence[UserHistory],
    k: int,
    mode: str = "personalized",
) -> List[ScoredCandidate]:
    """
    Top-k documents from each retrieved user's history.

    Args:
        retriever: Scoring model
        query_vec: Base embedding of the query
        user_vec: e_u of the querying user
        pool: The m retrieved users, querying user first
        k: Documents per user
        mode: Ranking score: "personalized" (S_uqd), "semantic" (S_qd) or
            "pretrained" (cosine of the base embeddings)

    Returns:
        Up to m x k candidates grouped by user in rank order; a document
        retrieved for several users is kept once, where it scored highest
    """
    if not pool:
        raise ContractError("no users to retrieve from (m = 0)")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    if mode not in CANDIDATE_MODES:
        raise ConfigError(f"unknown candidate mode '{mode}'")

    selected: List[ScoredCandidate] = []
    with no_grad():
        for user in pool:
            if not user.documents:
                raise ContractError(f"user '{user.user_id}' has an empty history")
            semantic = retriever.semantic_scores(query_vec, user.vectors).numpy()
            if retriever.alpha == 0.0:
                preference = np.zeros_like(semantic)
            else:
                preference = retriever.preference_scores(user_vec, user.vectors).numpy()
            combined = combined_score(retriever, semantic, preference)
            if mode == "personalized":
                ranking = combined
            elif mode == "semantic":
                ranking = semantic
            else:
                unit = query_vec / np.linalg.norm(query_vec)
                ranking = (user.vectors / np.linalg.norm(user.vectors, axis=1, keepdims=True)) @ unit

            order = sorted(range(len(user.documents)), key=lambda i: (-ranking[i], user.documents[i].id))
            for i in order[:k]:
                selected.append(ScoredCandidate(
                    owner=user.user_id,
                    document=user.documents[i],
                    vector=user.vectors[i],
                    semantic=float(semantic[i]),
                    preference=float(preference[i]),
                    combined=float(combined[i]),
                    ranking_score=float(ranking[i]),
                ))

    best: Dict[str, ScoredCandidate] = {}
    for candidate in selected:
        kept = best.get(candidate.document.id)
        if kept is None or candidate.ranking_score > kept.ranking_score:
            best[candidate.document.id] = candidate
    return [c for c in selected if best[c.document.id] is c]


def retriever_distribution(candidates) -> np.ndarray:
    """Softmax over the combined scores of the candidates."""
    scores = [c.combined if isinstance(c, ScoredCandidate) else float(c) for c in candidates]
    return candidate_distribution(np.asarray(scores, dtype=np.float64)).numpy()


def retriever_loss(p_retriever: Tensor, p_llm: np.ndarray) -> Tensor:
    return kl_divergence(p_retriever, p_llm)


@dataclass
class RetrievalExample:
    """Everything the retriever needs for one training sample."""

    sample: Sample
    query_vec: np.ndarray
    user_vec: np.ndarray
    pool: List[UserHistory]


FeedbackFn = Callable[[Sample, List[Document]], np.ndarray]


def train_retriever(
    retriever: Retriever,
    examples: Sequence[RetrievalExample],
    feedback: FeedbackFn,
    k: int,
    config: DistillConfig,
) -> List[float]:
    """
    Distill LLM feedback into the retriever.

    Candidates are chosen by the pre-trained semantic score, so they (and their
    feedback) are fixed for the whole run; the loss is KL between the softmax of
    the trained S_uqd over those candidates and the feedback distribution.

    Returns:
        Loss per step
    """
    distill_examples = []
    for example in examples:
        candidates = retrieve_topk_per_user(
            retriever, example.query_vec, example.user_vec, example.pool, k, mode="pretrained"
        )
        try:
            target = feedback(example.sample, [c.document for c in candidates])
        except FeedbackError as exc:
            raise TrainingError("retriever", 0, str(exc), sample_id=example.sample.sample_id) from exc
        vectors = np.stack([c.vector for c in candidates])
        distill_examples.append(DistillExample(
            sample_id=example.sample.sample_id,
            scores=_score_fn(retriever, example.query_vec, example.user_vec, vectors),
            target=target,
        ))
    return run_distillation(retriever, distill_examples, config, "retriever")


def _score_fn(retriever: Retriever, query_vec, user_vec, vectors) -> Callable[[], Tensor]:
    return lambda: retriever.combined_scores(query_vec, user_vec, vectors)
