"""
Synthetic clustered benchmark with cross-user planted evidence.

Each cluster has its own core vocabulary. For every sample of user u:
  - the query holds unique key tokens and a few cluster tokens;
  - a semantic decoy in u's own history repeats the query tokens (shuffled)
    plus noise, so plain query-document similarity prefers it;
  - the planted evidence (the key tokens plus fixed marker tokens) sits in the
    history of a *different* user of the same cluster.
The markers are the only signal shared by every evidence document, so a
retriever has to learn them from feedback to rank evidence above the decoy.
The mock oracle returns the exact target only when the evidence is in the prompt.

With ``users_per_cluster`` equal to the retrieval width m, a user's m - 1
nearest neighbours are exactly its cluster, so every holder is retrievable.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from corpus.dataset import Document, Profiles, Sample, UserProfile
from feedback.providers import MockOracleConfig, OracleSample
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

EVIDENCE_MARKERS = ("cited", "verified", "source")


@dataclass
class SyntheticSpec:
    clusters: int = 4
    users_per_cluster: int = 4
    history_length: int = 16
    vocab_per_cluster: int = 24
    noise_vocab: int = 16
    samples_per_user: int = 3
    doc_tokens: int = 8  # ordinary documents: cluster tokens plus noise tokens
    noise_per_doc: int = 1
    key_tokens: int = 3
    evidence_key_tokens: int = 3
    query_cluster_tokens: int = 2
    answer_tokens: int = 4
    label_tokens: int = 2
    sigma: float = 0.0

    def validate(self):
        if self.clusters < 1:
            raise ConfigError("need at least one cluster")
        if self.users_per_cluster < 2:
            raise ConfigError("evidence needs at least two users per cluster")
        if self.samples_per_user < 1:
            raise ConfigError("samples_per_user must be >= 1")
        if self.history_length < 2 * self.samples_per_user + 1:
            raise ConfigError(
                f"history_length must be >= {2 * self.samples_per_user + 1} "
                "(decoys, planted evidence and at least one ordinary document)"
            )
        if not 1 <= self.evidence_key_tokens <= self.key_tokens:
            raise ConfigError("evidence must hold between one and all of the query's key tokens")
        if self.doc_tokens <= self.noise_per_doc:
            raise ConfigError("documents need at least one cluster token")
        if self.vocab_per_cluster < max(self.doc_tokens, self.query_cluster_tokens):
            raise ConfigError("cluster vocabulary is too small")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")


def _draw(rng: np.random.Generator, vocab: List[str], count: int) -> List[str]:
    return [vocab[int(i)] for i in rng.choice(len(vocab), size=count, replace=False)]


def _shuffled(rng: np.random.Generator, tokens: List[str]) -> List[str]:
    return [tokens[int(i)] for i in rng.permutation(len(tokens))]


def generate_synthetic(
    spec: SyntheticSpec,
    rng: np.random.Generator,
) -> Tuple[Profiles, List[Sample], MockOracleConfig]:
    """
    Build users, samples and the oracle that scores them.

    Returns:
        (profiles, samples, oracle config)
    """
    spec.validate()
    noise = [f"n{j:02d}" for j in range(spec.noise_vocab)]
    vocab = {c: [f"c{c}w{j:02d}" for j in range(spec.vocab_per_cluster)] for c in range(spec.clusters)}
    labels = {c: " ".join(f"lab{c}x{j}" for j in range(spec.label_tokens)) for c in range(spec.clusters)}

    # user id -> document texts before shuffling into a history
    pending: Dict[str, List[str]] = {}
    user_cluster: Dict[str, int] = {}
    samples: List[Sample] = []
    planted: List[Tuple[Sample, str, str, int]] = []  # (sample, holder, evidence text, cluster)
    counter = 0

    for c in range(spec.clusters):
        users = [f"u{c}{i:02d}" for i in range(spec.users_per_cluster)]
        for uid in users:
            pending[uid] = []
            user_cluster[uid] = c
        for i, uid in enumerate(users):
            for j in range(spec.samples_per_user):
                keys = [f"k{counter:03d}{t}" for t in range(spec.key_tokens)]
                answer = [f"a{counter:03d}{t}" for t in range(spec.answer_tokens)]
                counter += 1
                query_tokens = keys + _draw(rng, vocab[c], spec.query_cluster_tokens)
                decoy = _shuffled(rng, query_tokens + _draw(rng, noise, spec.noise_per_doc))
                evidence = _shuffled(rng, keys[:spec.evidence_key_tokens] + list(EVIDENCE_MARKERS))
                holder = users[(i + 1 + j % (spec.users_per_cluster - 1)) % spec.users_per_cluster]
                sample = Sample(
                    sample_id=f"{uid}-q{j}",
                    user_id=uid,
                    query=" ".join(query_tokens),
                    target=" ".join(answer) + " " + labels[c],
                    task="synthetic",
                )
                samples.append(sample)
                pending[uid].append(" ".join(decoy))
                pending[holder].append(" ".join(evidence))
                planted.append((sample, holder, " ".join(evidence), c))

    profiles: Profiles = {}
    doc_clusters: Dict[str, int] = {}
    doc_texts: Dict[str, str] = {}
    text_to_id: Dict[str, str] = {}
    for uid, texts in pending.items():
        c = user_cluster[uid]
        while len(texts) < spec.history_length:
            tokens = _draw(rng, vocab[c], spec.doc_tokens - spec.noise_per_doc) + _draw(rng, noise, spec.noise_per_doc)
            texts.append(" ".join(_shuffled(rng, tokens)))
        history = []
        for position, index in enumerate(rng.permutation(len(texts))):
            doc = Document(id=f"{uid}-d{position:02d}", text=texts[int(index)], position=position)
            history.append(doc)
            doc_clusters[doc.id] = c
            doc_texts[doc.id] = doc.text
            text_to_id.setdefault(doc.text, doc.id)
        profiles[uid] = UserProfile(user_id=uid, history=history)

    oracle_samples = [
        OracleSample(
            sample_id=sample.sample_id,
            query=sample.query,
            target=sample.target,
            evidence_id=text_to_id[evidence_text],
            evidence_text=evidence_text,
            gold_cluster=c,
        )
        for sample, _holder, evidence_text, c in planted
    ]
    oracle = MockOracleConfig(
        doc_clusters=doc_clusters,
        doc_texts=doc_texts,
        samples=oracle_samples,
        cluster_labels=labels,
        noise_vocab=noise,
        sigma=spec.sigma,
    )
    logger.info(
        "Generated %d users in %d clusters with %d samples", len(profiles), spec.clusters, len(samples)
    )
    return profiles, samples, oracle
