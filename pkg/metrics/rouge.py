"""
ROUGE-1 and ROUGE-L without stemming or stopword removal.
"""

from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence

from utils.helpers import tokenize


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(overlap: int, candidate_length: int, reference_length: int) -> RougeScore:
    if candidate_length == 0 and reference_length == 0:
        return RougeScore(1.0, 1.0, 1.0)
    if candidate_length == 0 or reference_length == 0:
        return RougeScore(0.0, 0.0, 0.0)
    precision = overlap / candidate_length
    recall = overlap / reference_length
    if precision + recall == 0.0:
        return RougeScore(precision, recall, 0.0)
    return RougeScore(precision, recall, 2.0 * precision * recall / (precision + recall))


def lcs_length(first: Sequence[str], second: Sequence[str]) -> int:
    """Length of the longest common subsequence (row-by-row dynamic program)."""
    if len(first) < len(second):
        first, second = second, first
    previous = [0] * (len(second) + 1)
    for token in first:
        current = [0]
        for j, other in enumerate(second, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge1(candidate: str, reference: str) -> RougeScore:
    """Clipped unigram overlap."""
    cand_tokens: List[str] = tokenize(candidate)
    ref_tokens: List[str] = tokenize(reference)
    overlap = sum((Counter(cand_tokens) & Counter(ref_tokens)).values())
    return _score(overlap, len(cand_tokens), len(ref_tokens))


def rougeL(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence overlap."""
    cand_tokens = tokenize(candidate)
    ref_tokens = tokenize(reference)
    return _score(lcs_length(cand_tokens, ref_tokens), len(cand_tokens), len(ref_tokens))
