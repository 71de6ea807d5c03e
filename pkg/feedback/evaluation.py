"""
Per-task quality of a generated output against the reference (higher is better).
"""

from metrics.rouge import rouge1
from metrics.scoring import normalize_label, parse_rating
from utils.constants import CLASSIFICATION_TASKS, GENERATION_TASKS, RATING_TASKS, RATING_WORST_GAP
from utils.errors import ConfigError


def eval_output(task: str, target: str, output: str) -> float:
    """
    Score a prediction that was already extracted from the raw generation.

    Args:
        task: Task id
        target: Reference output y
        output: Prediction O

    Returns:
        ROUGE-1 F for generation tasks, 0/1 exact match for classification,
        -|pred - target| for rating (-4 when the prediction has no number)
    """
    if task in GENERATION_TASKS:
        return rouge1(output, target).f1
    if task in CLASSIFICATION_TASKS:
        return 1.0 if normalize_label(output) == normalize_label(target) else 0.0
    if task in RATING_TASKS:
        predicted = parse_rating(output)
        truth = parse_rating(target)
        if predicted is None or truth is None:
            return -RATING_WORST_GAP
        return -abs(predicted - truth)
    raise ConfigError(f"unknown task '{task}'")
