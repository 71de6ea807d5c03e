"""
Distillation of LLM feedback into a scoring model: candidate softmax,
KL divergence, and the shared training loop of the retriever and reranker.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from tqdm import tqdm

from autograd.layers import Module
from autograd.optim import Adam
from autograd.tensor import Tensor, log, log_softmax, softmax
from utils.constants import LEARNING_RATE, SEED
from utils.errors import ContractError, NumericError, TrainingError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)


def candidate_distribution(scores) -> Tensor:
    """Softmax (temperature 1) over candidate scores."""
    if not isinstance(scores, Tensor):
        scores = Tensor(scores)
    if scores.ndim != 1 or scores.size == 0:
        raise ContractError(f"expected a nonempty score vector, got shape {scores.shape}")
    return softmax(scores)


def _check_target(target: np.ndarray, size: int) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (size,):
        raise ContractError(f"distributions differ in support: {size} vs {target.shape}")
    if np.any(target <= 0.0) or abs(target.sum() - 1.0) > 1e-6:
        raise ContractError("target must be a strictly positive distribution")
    return target


def kl_divergence(p_model: Tensor, p_target: np.ndarray) -> Tensor:
    """KL(p_model || p_target); p_target is a constant."""
    target = _check_target(p_target, p_model.size)
    return (p_model * (log(p_model) - np.log(target))).sum()


def distillation_loss(scores: Tensor, p_target: np.ndarray) -> Tensor:
    """KL(softmax(scores) || p_target) computed through log-softmax."""
    target = _check_target(p_target, scores.size)
    log_p = log_softmax(scores)
    return (softmax(scores) * (log_p - np.log(target))).sum()


@dataclass
class DistillConfig:
    steps: int
    lr: float = LEARNING_RATE
    seed: int = SEED
    progress: bool = False


@dataclass
class DistillExample:
    """A training sample whose candidates and feedback target are fixed."""

    sample_id: str
    scores: Callable[[], Tensor]  # recomputes model scores under the current weights
    target: np.ndarray


def run_distillation(
    module: Module,
    examples: Sequence[DistillExample],
    config: DistillConfig,
    stage: str,
) -> List[float]:
    """
    Minimize the feedback KL with Adam, one example per step, cycling through
    a fresh permutation of the examples each pass.

    Returns:
        Loss per step
    """
    if not examples:
        raise TrainingError(stage, 0, "no training examples")

    rng = make_rng(config.seed)
    optimizer = Adam(module.parameters(), config.lr)
    trace: List[float] = []
    order = np.arange(len(examples))

    for step in tqdm(range(config.steps), desc=stage, disable=not config.progress):
        if step % len(examples) == 0:
            order = rng.permutation(len(examples))
        example = examples[order[step % len(examples)]]
        optimizer.zero_grad()
        try:
            loss = distillation_loss(example.scores(), example.target)
            loss.backward()
        except (NumericError, ContractError) as exc:
            logger.error("%s training failed at step %d on sample %s", stage, step, example.sample_id)
            raise TrainingError(stage, step, str(exc), sample_id=example.sample_id) from exc
        optimizer.step()
        trace.append(loss.item())

    if trace:
        window = min(len(examples), len(trace))
        logger.info(
            "%s trained for %d steps (mean loss %.4f -> %.4f)",
            stage, len(trace), np.mean(trace[:window]), np.mean(trace[-window:]),
        )
    return trace
