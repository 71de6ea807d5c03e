"""
Generation providers: a chat-completion client and a deterministic mock oracle.
"""

import json
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import openai

from utils.constants import LLM_TOKEN_ENV, MAX_RETRIES, REQUEST_TIMEOUT
from utils.errors import ConfigError, ContractError
from utils.helpers import load_json, save_json, stable_hash64
from utils.retry import call_with_retries

logger = logging.getLogger(__name__)


class GenerationProvider(ABC):
    """Turns a prompt into generated text."""

    @property
    @abstractmethod
    def provider_id(self) -> str:
        """Stable identifier used in feedback cache keys."""

    @abstractmethod
    def generate(self, prompt: str) -> str:
        """Generate a completion for ``prompt``."""


@dataclass
class OracleSample:
    """What the mock oracle knows about one query."""

    sample_id: str
    query: str
    target: str
    evidence_id: str
    evidence_text: str
    gold_cluster: int


@dataclass
class MockOracleConfig:
    """
    Latent structure behind a synthetic corpus.

    Attributes:
        doc_clusters: Document id -> latent cluster
        doc_texts: Document id -> text (how the oracle recognizes documents in a prompt)
        samples: One entry per query
        cluster_labels: Cluster -> label text emitted for partial credit
        noise_vocab: Replacement tokens for sigma noise
        sigma: Per-token replacement probability
        fallback_answer: Output when no useful document is present
    """

    doc_clusters: Dict[str, int]
    doc_texts: Dict[str, str]
    samples: List[OracleSample]
    cluster_labels: Dict[int, str]
    noise_vocab: List[str] = field(default_factory=list)
    sigma: float = 0.0
    fallback_answer: str = "unknown"

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"oracle noise sigma must be >= 0, got {self.sigma}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["cluster_labels"] = {str(k): v for k, v in self.cluster_labels.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "MockOracleConfig":
        return cls(
            doc_clusters={k: int(v) for k, v in data["doc_clusters"].items()},
            doc_texts=dict(data["doc_texts"]),
            samples=[OracleSample(**item) for item in data["samples"]],
            cluster_labels={int(k): v for k, v in data["cluster_labels"].items()},
            noise_vocab=list(data.get("noise_vocab", [])),
            sigma=float(data.get("sigma", 0.0)),
            fallback_answer=data.get("fallback_answer", "unknown"),
        )

    def save(self, path: str):
        save_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str) -> "MockOracleConfig":
        data = load_json(path)
        if data is None:
            raise ConfigError(f"oracle file {path} not found")
        return cls.from_dict(data)


class MockOracleGenerator(GenerationProvider):
    """
    Deterministic stand-in for an LLM on synthetic corpora.

    The answer is the exact target when the sample's planted evidence appears in
    the prompt, the gold cluster's label when any gold-cluster document does,
    and ``fallback_answer`` otherwise. Output is '{"answer": "..."}'.
    """

    def __init__(self, oracle: MockOracleConfig, seed: int = 0):
        self.oracle = oracle
        self.seed = seed
        self.cluster_texts: Dict[int, List[str]] = {}
        for doc_id, cluster in oracle.doc_clusters.items():
            self.cluster_texts.setdefault(cluster, []).append(oracle.doc_texts[doc_id])

    @property
    def provider_id(self) -> str:
        return f"mock-oracle-{self.seed}-{self.oracle.sigma}"

    def _match_sample(self, prompt: str) -> Optional[OracleSample]:
        # The user input comes last in every template
        best, best_position = None, -1
        for sample in self.oracle.samples:
            position = prompt.rfind(sample.query)
            if position > best_position or (position == best_position and best and len(sample.query) > len(best.query)):
                best, best_position = sample, position
        return best if best_position >= 0 else None

    def answer(self, prompt: str) -> str:
        """The noise-free answer for ``prompt``."""
        sample = self._match_sample(prompt)
        if sample is None:
            return self.oracle.fallback_answer
        if sample.evidence_text in prompt:
            return sample.target
        if any(text in prompt for text in self.cluster_texts.get(sample.gold_cluster, [])):
            return self.oracle.cluster_labels[sample.gold_cluster]
        return self.oracle.fallback_answer

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ContractError("prompt must be nonempty")
        tokens = self.answer(prompt).split()
        if self.oracle.sigma > 0 and self.oracle.noise_vocab:
            rng = np.random.default_rng([stable_hash64(prompt), self.seed])
            tokens = [
                self.oracle.noise_vocab[rng.integers(len(self.oracle.noise_vocab))]
                if rng.random() < self.oracle.sigma else token
                for token in tokens
            ]
        return json.dumps({"answer": " ".join(tokens)})


class ChatCompletionProvider(GenerationProvider):
    """
    Chat-completion endpoint with greedy decoding (temperature 0).
    The auth token is read from CFRAG_LLM_TOKEN.
    """

    RETRYABLE = (
        openai.APIConnectionError,
        openai.APITimeoutError,
        openai.RateLimitError,
        openai.InternalServerError,
    )

    def __init__(
        self,
        base_url: str,
        model: str,
        client=None,
        max_retries: int = MAX_RETRIES,
        timeout: float = REQUEST_TIMEOUT,
        backoff_factor: float = 1.0,
        max_tokens: int = 256,
    ):
        if not model:
            raise ConfigError("chat provider needs a model name")
        self.base_url = base_url
        self.model = model
        self.max_retries = max_retries
        self.backoff_factor = backoff_factor
        self.max_tokens = max_tokens
        if client is None:
            client = openai.OpenAI(
                base_url=base_url or None,
                api_key=os.environ.get(LLM_TOKEN_ENV, "unused"),
                timeout=timeout,
                max_retries=0,
            )
        self.client = client

    @property
    def provider_id(self) -> str:
        return f"chat:{self.base_url}:{self.model}"

    def generate(self, prompt: str) -> str:
        if not prompt:
            raise ContractError("prompt must be nonempty")
        response = call_with_retries(
            lambda: self.client.chat.completions.create(
                model=self.model,
                messages=[{"role": "user", "content": prompt}],
                temperature=0.0,
                max_tokens=self.max_tokens,
            ),
            self.RETRYABLE,
            f"chat completion ({self.model})",
            max_tries=self.max_retries,
            factor=self.backoff_factor,
        )
        if not response.choices:
            return ""
        return response.choices[0].message.content or ""
