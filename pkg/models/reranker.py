"""
Personalized reranker: score = scorer([cross features, user_mlp(user embedding)]).
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from autograd.layers import MLP, Module
from autograd.tensor import Tensor, concat, matmul, no_grad, reshape
from corpus.dataset import Document, Sample
from models.distill import (
    DistillConfig, DistillExample, candidate_distribution, kl_divergence, run_distillation,
)
from models.featurizer import CrossFeaturizer
from models.retriever import ScoredCandidate
from utils.errors import ContractError, DimensionError, FeedbackError, TrainingError

logger = logging.getLogger(__name__)


class Reranker(Module):
    """
    ``user_mlp`` (d -> d -> d) projects the user embedding; ``scorer`` (2d -> 2d -> 1)
    scores the concatenation. ``scorer`` starts with a zero output layer, so an
    untrained reranker scores every candidate 0.
    """

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.user_mlp = MLP(dim, dim, dim, rng)
        self.scorer = MLP(2 * dim, 2 * dim, 1, rng, zero_output=True)

    def scores(self, features: np.ndarray, user_vec: np.ndarray) -> Tensor:
        """Scores for n candidates from their n x d features."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.dim or user_vec.shape != (self.dim,):
            raise DimensionError(f"reranker expects n x {self.dim} features and a {self.dim}-vector")
        n = features.shape[0]
        user = reshape(self.user_mlp(Tensor(user_vec)), (1, self.dim))
        tiled = matmul(Tensor(np.ones((n, 1))), user)
        return reshape(self.scorer(concat([Tensor(features), tiled], axis=1)), (n,))


def rerank_score(reranker: Reranker, h_qd: np.ndarray, user_vec: np.ndarray) -> float:
    with no_grad():
        return reranker.scores(h_qd.reshape(1, -1), user_vec).item()


@dataclass(frozen=True, eq=False)
class RerankedCandidate:
    candidate: ScoredCandidate
    score: float


def rerank_topk(
    reranker: Reranker,
    featurizer: CrossFeaturizer,
    query: str,
    candidates: Sequence[ScoredCandidate],
    user_vec: np.ndarray,
    k: int,
) -> List[RerankedCandidate]:
    """The k best candidates by reranker score, ties on ascending document id."""
    if not candidates:
        raise ContractError("nothing to rerank")
    features = featurizer.featurize_many(query, [c.document.text for c in candidates])
    with no_grad():
        scores = reranker.scores(features, user_vec).numpy()
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i].document.id))
    return [RerankedCandidate(candidates[i], float(scores[i])) for i in order[:k]]


def reranker_distribution(scores: Sequence[float]) -> np.ndarray:
    return candidate_distribution(np.asarray(scores, dtype=np.float64)).numpy()


def reranker_loss(p_reranker: Tensor, p_llm: np.ndarray) -> Tensor:
    return kl_divergence(p_reranker, p_llm)


@dataclass
class RerankExample:
    sample: Sample
    user_vec: np.ndarray
    candidates: List[ScoredCandidate]  # from the trained retriever


def train_reranker(
    reranker: Reranker,
    featurizer: CrossFeaturizer,
    examples: Sequence[RerankExample],
    feedback: Callable[[Sample, List[Document]], np.ndarray],
    config: DistillConfig,
) -> List[float]:
    """
    Distill LLM feedback into the reranker over the frozen retriever's
    personalized candidates. Returns the loss per step.
    """
    distill_examples = []
    for example in examples:
        if not example.candidates:
            continue
        documents = [c.document for c in example.candidates]
        try:
            target = feedback(example.sample, documents)
        except FeedbackError as exc:
            raise TrainingError("reranker", 0, str(exc), sample_id=example.sample.sample_id) from exc
        features = featurizer.featurize_many(example.sample.query, [doc.text for doc in documents])
        distill_examples.append(DistillExample(
            sample_id=example.sample.sample_id,
            scores=_score_fn(reranker, features, example.user_vec),
            target=target,
        ))
    return run_distillation(reranker, distill_examples, config, "reranker")


def _score_fn(reranker: Reranker, features, user_vec) -> Callable[[], Tensor]:
    return lambda: reranker.scores(features, user_vec)
