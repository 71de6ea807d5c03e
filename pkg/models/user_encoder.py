"""
Contrastive user encoder.

A user's embedded history (plus a learned positional table) passes through a
transformer encoder; the mean of its output rows is the user embedding e_u.
Training pulls two augmented views of the same history together with a
symmetric InfoNCE loss whose negatives are the other users of the batch.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from tqdm import tqdm

from autograd.layers import Module, TransformerEncoderLayer
from autograd.optim import Adam
from autograd.tensor import Tensor, concat, logsumexp, matmul, mean_rows, normalize, reshape
from corpus.dataset import UserProfile
from corpus.embeddings import EmbeddingProvider
from models.augment import MASK_TOKEN, AugmentationConfig, sample_views
from utils.constants import (
    CONTRASTIVE_BATCH_SIZE, ENCODER_HEADS, ENCODER_LAYERS, INIT_SCALE,
    LEARNING_RATE, MAX_HISTORY, SEED, TAU, USER_EPOCHS,
)
from utils.errors import ConfigError, ContractError, DimensionError, NumericError, TrainingError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)


class UserEncoder(Module):
    """
    Positional table P (max_history x d), a trainable mask embedding and
    ``layers`` post-norm transformer encoder layers.
    """

    def __init__(
        self,
        dim: int,
        max_history: int,
        rng: np.random.Generator,
        heads: int = ENCODER_HEADS,
        layers: int = ENCODER_LAYERS,
    ):
        super().__init__()
        if max_history < 1:
            raise ConfigError(f"max_history must be >= 1, got {max_history}")
        self.dim = dim
        self.max_history = max_history
        self.num_layers = layers
        self.positions = Tensor(rng.normal(0.0, INIT_SCALE, size=(max_history, dim)), requires_grad=True)
        self.mask_embedding = Tensor(rng.normal(0.0, INIT_SCALE, size=dim), requires_grad=True)
        for i in range(layers):
            setattr(self, f"layer{i}", TransformerEncoderLayer(dim, heads, rng))

    def forward(self, embedded: Tensor) -> Tensor:
        """
        Args:
            embedded: N x d document embeddings, oldest first

        Returns:
            e_u as a d-vector
        """
        if embedded.ndim != 2 or embedded.shape[1] != self.dim:
            raise DimensionError(f"expected N x {self.dim} history, got {embedded.shape}")
        n = embedded.shape[0]
        if n < 1:
            raise ContractError("cannot encode an empty history")
        if n > self.max_history:
            raise ContractError(f"history of {n} documents exceeds max_history {self.max_history}")

        x = embedded + self.positions[0:n]
        for i in range(self.num_layers):
            x = getattr(self, f"layer{i}")(x)
        return mean_rows(x)

    def embed_view(self, view: Sequence[int], documents: np.ndarray) -> Tensor:
        """Rows of ``documents`` selected by ``view``; MASK_TOKEN rows use the mask embedding."""
        index = np.asarray(view, dtype=np.int64)
        masked = index == MASK_TOKEN
        rows = documents[np.where(masked, 0, index)] * (~masked)[:, None]
        embedded = Tensor(rows)
        if masked.any():
            indicator = Tensor(masked.astype(np.float64).reshape(-1, 1))
            embedded = embedded + matmul(indicator, reshape(self.mask_embedding, (1, self.dim)))
        return embedded

    def encode_view(self, view: Sequence[int], documents: np.ndarray) -> Tensor:
        return self(self.embed_view(view, documents))


def encode_user(encoder: UserEncoder, embedded_history) -> Tensor:
    """e_u for an already embedded history (N x d)."""
    if not isinstance(embedded_history, Tensor):
        embedded_history = Tensor(embedded_history)
    return encoder(embedded_history)


def infonce_loss(first: Tensor, second: Tensor, tau: float) -> Tensor:
    """
    Symmetric InfoNCE over a batch of paired views (B x d each).

    For user i with similarity S_ij = cos(first_i, second_j) / tau:
        loss_i = -(S_ii - logsumexp_{j != i} S_ij) - (S_ii - logsumexp_{j != i} S_ji)
    The positive pair is excluded from both denominators. Returns the batch mean.
    """
    if first.ndim != 2 or first.shape != second.shape:
        raise DimensionError(f"view batches differ in shape: {first.shape} vs {second.shape}")
    batch = first.shape[0]
    if batch < 2:
        raise ContractError("InfoNCE needs at least two users per batch")
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")

    similarity = matmul(normalize(first), normalize(second).T) * (1.0 / tau)

    diagonal = np.arange(batch)
    rows = np.repeat(diagonal, batch - 1).reshape(batch, batch - 1)
    cols = np.array([[j for j in range(batch) if j != i] for i in range(batch)])
    positives = similarity[diagonal, diagonal]
    forward_negatives = logsumexp(similarity[rows, cols], axis=-1)
    backward_negatives = logsumexp(similarity[cols, rows], axis=-1)

    per_user = (forward_negatives - positives) + (backward_negatives - positives)
    return per_user.mean()


@dataclass
class ContrastiveConfig:
    dim: int
    max_history: int = MAX_HISTORY
    heads: int = ENCODER_HEADS
    layers: int = ENCODER_LAYERS
    tau: float = TAU
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    epochs: int = USER_EPOCHS
    batch_size: int = CONTRASTIVE_BATCH_SIZE
    lr: float = LEARNING_RATE
    seed: int = SEED
    progress: bool = False


@dataclass
class UserTrainingResult:
    encoder: UserEncoder
    loss_trace: List[float]  # mean loss per epoch


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def history_matrix(profile: UserProfile, provider: EmbeddingProvider, max_history: int) -> np.ndarray:
    """Embeddings of the most recent ``max_history`` documents."""
    return provider.embed_documents(profile.history[-max_history:])


def train_user_encoder(
    profiles: Dict[str, UserProfile],
    provider: EmbeddingProvider,
    config: ContrastiveConfig,
) -> UserTrainingResult:
    """
    Train a fresh encoder: for each batch of users, draw two views per
    history, encode both and take an Adam step on the InfoNCE loss.
    """
    if len(profiles) < 2:
        raise ContractError("contrastive training needs at least two users")
    if config.batch_size < 2:
        raise ConfigError("contrastive batch size must be >= 2")

    rng = make_rng(config.seed)
    encoder = UserEncoder(config.dim, config.max_history, rng, heads=config.heads, layers=config.layers)
    optimizer = Adam(encoder.parameters(), config.lr)

    user_ids = list(profiles)
    matrices = {uid: history_matrix(profiles[uid], provider, config.max_history) for uid in user_ids}

    trace: List[float] = []
    step = 0
    for epoch in tqdm(range(config.epochs), desc="user encoder", disable=not config.progress):
        losses = []
        for batch in _batches(rng.permutation(len(user_ids)), config.batch_size):
            optimizer.zero_grad()
            try:
                first, second = [], []
                for index in batch:
                    documents = matrices[user_ids[index]]
                    view_a, view_b = sample_views(list(range(len(documents))), config.augmentation, rng)
                    first.append(reshape(encoder.encode_view(view_a, documents), (1, config.dim)))
                    second.append(reshape(encoder.encode_view(view_b, documents), (1, config.dim)))
                loss = infonce_loss(concat(first), concat(second), config.tau)
                loss.backward()
            except NumericError as exc:
                logger.error("User encoder diverged at step %d", step)
                raise TrainingError("user", step, str(exc)) from exc
            optimizer.step()
            losses.append(loss.item())
            step += 1
        trace.append(float(np.mean(losses)))
        logger.debug("user encoder epoch %d: loss %.4f", epoch, trace[-1])

    if trace:
        logger.info("User encoder trained for %d epochs (loss %.4f -> %.4f)", len(trace), trace[0], trace[-1])
    return UserTrainingResult(encoder=encoder, loss_trace=trace)
