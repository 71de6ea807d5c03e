"""
Run reports: a JSON document plus flat CSVs for plotting.
"""

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from utils.constants import LOSSES_CSV, REPORT_FILE, SAMPLES_CSV
from utils.errors import FormatError
from utils.helpers import load_json, save_json

logger = logging.getLogger(__name__)


@dataclass
class SampleResult:
    variant: str
    sample_id: str
    user_id: str
    task: str
    target: str
    documents: List[str]  # ids in prompt order
    output: str
    prediction: str
    score: float
    evidence_hit: Optional[float] = None
    retriever_top1: Optional[float] = None
    reranker_top1: Optional[float] = None


@dataclass
class RunReport:
    config: Dict[str, Any]
    seed: int
    stages: Dict[str, List[float]] = field(default_factory=dict)  # loss traces
    variants: Dict[str, Dict[str, float]] = field(default_factory=dict)  # metrics per variant
    samples: List[SampleResult] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        try:
            return cls(
                config=data["config"],
                seed=data["seed"],
                stages={k: list(v) for k, v in data.get("stages", {}).items()},
                variants=data.get("variants", {}),
                samples=[SampleResult(**row) for row in data.get("samples", [])],
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed report: {exc}") from exc


SAMPLE_COLUMNS = (
    "variant", "sample_id", "user_id", "task", "target", "prediction", "score",
    "evidence_hit", "retriever_top1", "reranker_top1", "documents",
)


def emit_report(report: RunReport, directory: str) -> Dict[str, str]:
    """
    Write report.json, samples.csv (one row per evaluated sample and variant)
    and losses.csv (stage, step, loss).

    Returns:
        Written file paths by kind
    """
    os.makedirs(directory, exist_ok=True)
    paths = {
        "json": os.path.join(directory, REPORT_FILE),
        "samples": os.path.join(directory, SAMPLES_CSV),
        "losses": os.path.join(directory, LOSSES_CSV),
    }
    save_json(paths["json"], report.to_dict())

    with open(paths["samples"], "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SAMPLE_COLUMNS)
        writer.writeheader()
        for row in report.samples:
            values = {column: getattr(row, column) for column in SAMPLE_COLUMNS}
            values["documents"] = " ".join(row.documents)
            writer.writerow({k: "" if v is None else v for k, v in values.items()})

    with open(paths["losses"], "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("stage", "step", "loss"))
        for stage, trace in report.stages.items():
            for step, loss in enumerate(trace):
                writer.writerow((stage, step, repr(float(loss))))

    logger.info("Report written to %s", directory)
    return paths


def load_report(directory: str) -> RunReport:
    data = load_json(os.path.join(directory, REPORT_FILE))
    if data is None:
        raise FormatError(f"no {REPORT_FILE} in {directory}")
    return RunReport.from_dict(data)
