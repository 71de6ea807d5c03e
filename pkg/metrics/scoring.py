"""
Classification and rating metrics, plus prediction extraction from raw
generator output.
"""

import json
import math
import re
from typing import Iterable, Optional, Sequence, Tuple, Union

from utils.constants import OUTPUT_FIELDS, RATING_MIDPOINT
from utils.errors import ContractError

_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")
_DECODER = json.JSONDecoder()


def normalize_label(text: str) -> str:
    return text.strip().lower()


def parse_rating(text: Union[str, float, int]) -> Optional[float]:
    """First number in the text, or None."""
    if isinstance(text, (int, float)):
        return float(text)
    match = _NUMBER.search(text)
    return float(match.group()) if match else None


def classification_metrics(
    preds: Sequence[str],
    targets: Sequence[str],
    labels: Iterable[str],
) -> Tuple[float, float]:
    """
    Accuracy and macro F1 over ``labels``.

    Predictions outside the label set are wrong for every class.

    Returns:
        (accuracy, macro F1)
    """
    if len(preds) != len(targets):
        raise ContractError(f"{len(preds)} predictions for {len(targets)} targets")
    if not preds:
        raise ContractError("classification metrics need at least one prediction")

    preds = [normalize_label(p) for p in preds]
    targets = [normalize_label(t) for t in targets]
    label_set = sorted({normalize_label(label) for label in labels})

    accuracy = sum(p == t for p, t in zip(preds, targets)) / len(targets)

    f1_scores = []
    for label in label_set:
        tp = sum(p == label and t == label for p, t in zip(preds, targets))
        fp = sum(p == label and t != label for p, t in zip(preds, targets))
        fn = sum(p != label and t == label for p, t in zip(preds, targets))
        denominator = 2 * tp + fp + fn
        f1_scores.append(2 * tp / denominator if denominator else 0.0)
    macro_f1 = sum(f1_scores) / len(f1_scores) if f1_scores else 0.0
    return accuracy, macro_f1


def regression_metrics(
    preds: Sequence[Union[str, float]],
    targets: Sequence[Union[str, float]],
) -> Tuple[float, float]:
    """
    MAE and RMSE. Unparseable predictions count as the scale midpoint.

    Returns:
        (MAE, RMSE)
    """
    if len(preds) != len(targets):
        raise ContractError(f"{len(preds)} predictions for {len(targets)} targets")
    if not preds:
        raise ContractError("regression metrics need at least one prediction")

    errors = []
    for pred, target in zip(preds, targets):
        value = parse_rating(pred)
        if value is None:
            value = RATING_MIDPOINT
        truth = parse_rating(target)
        if truth is None:
            raise ContractError(f"rating target {target!r} is not numeric")
        errors.append(value - truth)

    mae = sum(abs(e) for e in errors) / len(errors)
    rmse = math.sqrt(sum(e * e for e in errors) / len(errors))
    return mae, rmse


def extract_json_field(text: str, field: str) -> str:
    """
    Return ``field`` of the first well-formed JSON object in ``text``.
    Falls back to the trimmed raw text when there is no such object or it
    lacks the field.
    """
    start = text.find("{")
    while start != -1:
        try:
            value, _ = _DECODER.raw_decode(text, start)
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
            continue
        return str(value[field]).strip() if field in value else text.strip()
    return text.strip()


def extract_prediction(task: str, text: str) -> str:
    """Pull the task's answer out of raw generator output."""
    field = OUTPUT_FIELDS.get(task)
    if field is None:
        return text.strip()
    return extract_json_field(text, field)
