"""
LLM feedback over retrieval candidates: one generation per candidate, scored
against the reference, with a persistent prompt cache.
"""

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import httpx
import numpy as np
import openai

from corpus.dataset import Document, Sample
from feedback.evaluation import eval_output
from feedback.providers import GenerationProvider
from metrics.scoring import extract_prediction
from utils.constants import FEEDBACK_WORKERS
from utils.errors import CfragError, ContractError, FeedbackError
from utils.helpers import prompt_key, softmax

logger = logging.getLogger(__name__)

# failures that mark one candidate as failed; anything else is a bug and propagates
GENERATION_FAILURES = (CfragError, openai.APIError, httpx.HTTPError)


@dataclass(frozen=True)
class FeedbackRecord:
    sample_id: str
    document_id: str
    output: str
    score: float


class FeedbackCache:
    """
    Generated outputs keyed by (provider id, prompt) hash.
    Backed by an append-only JSON-lines file when ``path`` is given.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._entries: Dict[str, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                for raw in f:
                    if raw.strip():
                        record = json.loads(raw)
                        self._entries[record["key"]] = record["output"]
            logger.debug("Loaded %d cached generations from %s", len(self._entries), path)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            output = self._entries.get(key)
            if output is None:
                self.misses += 1
            else:
                self.hits += 1
            return output

    def put(self, key: str, output: str, score: float):
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = output
            if self.path:
                directory = os.path.dirname(self.path)
                if directory:
                    os.makedirs(directory, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps({"key": key, "output": output, "score": score}) + "\n")


def llm_distribution(scores: Sequence[float]) -> np.ndarray:
    """Softmax (temperature 1) of candidate quality scores."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ContractError("feedback distribution needs at least one score")
    if not np.all(np.isfinite(values)):
        raise ContractError("feedback scores must be finite")
    return softmax(values)


PromptBuilder = Callable[[Sample, Document], str]


def collect_feedback(
    provider: GenerationProvider,
    sample: Sample,
    candidates: Sequence[Document],
    prompt_builder: PromptBuilder,
    cache: Optional[FeedbackCache] = None,
    workers: int = FEEDBACK_WORKERS,
) -> List[FeedbackRecord]:
    """
    Generate with each candidate document in the prompt and score the output.

    Args:
        provider: Generator queried on cache misses
        sample: The query and its reference output
        candidates: Documents to try one at a time
        prompt_builder: Renders the prompt for (sample, document)
        cache: Shared generation cache
        workers: Maximum requests in flight

    Returns:
        One record per candidate, in candidate order
    """
    if not candidates:
        raise ContractError(f"sample {sample.sample_id}: no candidates to collect feedback for")
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")

    def run(doc: Document) -> FeedbackRecord:
        prompt = prompt_builder(sample, doc)
        key = prompt_key(provider.provider_id, prompt)
        output = cache.get(key) if cache is not None else None
        if output is None:
            output = provider.generate(prompt)
            score = eval_output(sample.task, sample.target, extract_prediction(sample.task, output))
            if cache is not None:
                cache.put(key, output, score)
        else:
            score = eval_output(sample.task, sample.target, extract_prediction(sample.task, output))
        return FeedbackRecord(sample.sample_id, doc.id, output, score)

    records: List[Optional[FeedbackRecord]] = [None] * len(candidates)
    failed: List[str] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, doc) for doc in candidates]
        for index, future in enumerate(futures):
            try:
                records[index] = future.result()
            except GENERATION_FAILURES as exc:
                logger.error("Generation failed for %s/%s: %s", sample.sample_id, candidates[index].id, exc)
                failed.append(candidates[index].id)

    if failed:
        raise FeedbackError(sample.sample_id, failed)
    return records
