"""
Run context shared by the training stages and evaluation.
"""

import logging
import os
from typing import Dict, List, Sequence, Tuple

import numpy as np

from corpus.dataset import Document, Sample, load_dataset
from corpus.embeddings import EmbeddingProvider, build_provider
from feedback.collector import FeedbackCache, collect_feedback, llm_distribution
from feedback.providers import ChatCompletionProvider, GenerationProvider, MockOracleConfig, MockOracleGenerator
from models.featurizer import CrossFeaturizer, MockCrossFeaturizer, RemoteCrossFeaturizer
from models.retriever import UserHistory
from pipeline.config import PipelineConfig
from pipeline.prompts import build_prompt
from utils.constants import FEEDBACK_CACHE_FILE
from utils.errors import ConfigError
from utils.helpers import clamp, make_rng

logger = logging.getLogger(__name__)


def build_generator(config: PipelineConfig) -> GenerationProvider:
    if config.generator == "mock":
        path = config.oracle_path()
        if not os.path.exists(path):
            raise ConfigError(f"mock generator needs an oracle file, {path} not found (run 'synth' first)")
        return MockOracleGenerator(MockOracleConfig.load(path), seed=config.seed)
    return ChatCompletionProvider(
        config.llm_endpoint,
        config.llm_model,
        max_retries=config.max_retries,
        timeout=config.request_timeout,
    )


def build_featurizer(config: PipelineConfig) -> CrossFeaturizer:
    if config.featurizer == "mock":
        return MockCrossFeaturizer(config.dim)
    if not config.featurizer_endpoint:
        raise ConfigError("remote featurizer needs featurizer_endpoint")
    return RemoteCrossFeaturizer(
        config.featurizer_endpoint,
        config.dim,
        max_retries=config.max_retries,
        timeout=config.request_timeout,
    )


def split_samples(samples: Sequence[Sample], train_fraction: float, seed: int) -> Tuple[List[Sample], List[Sample]]:
    """Random train/test split by seed; both halves keep dataset order."""
    if len(samples) < 2:
        raise ConfigError("need at least two samples to split into train and test")
    n_train = int(clamp(round(train_fraction * len(samples)), 1, len(samples) - 1))
    chosen = set(int(i) for i in make_rng(seed).permutation(len(samples))[:n_train])
    train = [s for i, s in enumerate(samples) if i in chosen]
    test = [s for i, s in enumerate(samples) if i not in chosen]
    return train, test


class PipelineContext:
    """
    Loaded dataset, providers and the feedback cache for one run directory.
    """

    def __init__(
        self,
        config: PipelineConfig,
        provider: EmbeddingProvider = None,
        generator: GenerationProvider = None,
        featurizer: CrossFeaturizer = None,
    ):
        self.config = config
        self.profiles, self.samples = load_dataset(config.dataset, max_history=config.max_history)
        self.provider = provider or build_provider(
            config.embedding_provider,
            config.dim,
            endpoint=config.embedding_endpoint,
            model=config.embedding_model,
            path=config.embedding_path,
        )
        self.generator = generator or build_generator(config)
        self.featurizer = featurizer or build_featurizer(config)
        self.cache = FeedbackCache(self.path(FEEDBACK_CACHE_FILE))
        self.train_samples, self.test_samples = split_samples(self.samples, config.train_fraction, config.seed)
        self._histories: Dict[str, UserHistory] = {}
        # sample id -> planted evidence document id (synthetic data only)
        self.evidence: Dict[str, str] = {}
        if isinstance(self.generator, MockOracleGenerator):
            self.evidence = {s.sample_id: s.evidence_id for s in self.generator.oracle.samples}
        logger.info(
            "Loaded %d users, %d train / %d test samples from %s",
            len(self.profiles), len(self.train_samples), len(self.test_samples), config.dataset,
        )

    def path(self, name: str) -> str:
        return os.path.join(self.config.run_dir, name)

    def effective_m(self) -> int:
        m = self.config.top_m
        if m > len(self.profiles):
            logger.warning("top_m=%d exceeds the %d users; using %d", m, len(self.profiles), len(self.profiles))
            m = len(self.profiles)
        return m

    def history(self, user_id: str) -> UserHistory:
        if user_id not in self._histories:
            profile = self.profiles[user_id]
            self._histories[user_id] = UserHistory(
                user_id=user_id,
                documents=list(profile.history),
                vectors=self.provider.embed_documents(profile.history),
            )
        return self._histories[user_id]

    def pool(self, user_ids: Sequence[str]) -> List[UserHistory]:
        return [self.history(uid) for uid in user_ids]

    def query_vec(self, sample: Sample) -> np.ndarray:
        return self.provider.embed_text(sample.query)

    def prompt(self, sample: Sample, documents: Sequence[Document]) -> str:
        return build_prompt(sample.task, sample.query, documents, sample.aux)

    def feedback(self, sample: Sample, documents: List[Document]) -> np.ndarray:
        """p_llm over ``documents``, each tried alone in the prompt."""
        records = collect_feedback(
            self.generator,
            sample,
            documents,
            lambda s, doc: self.prompt(s, [doc]),
            cache=self.cache,
            workers=self.config.feedback_workers,
        )
        return llm_distribution([record.score for record in records])
