"""
Grid search over m, tau, alpha and the learning rate.
"""

import itertools
import logging
import os
from typing import Any, Dict, List

from pipeline.config import PipelineConfig
from pipeline.evaluation import primary_metric, run_eval
from pipeline.training import run_train
from utils.helpers import save_json

logger = logging.getLogger(__name__)

GRID_FILE = "grid.json"


def combination_name(values: Dict[str, Any]) -> str:
    return "_".join(f"{axis}{value:g}" for axis, value in values.items())


def run_grid(config: PipelineConfig) -> Dict[str, Any]:
    """
    Train and evaluate every combination of the grid axes, each in its own
    subdirectory of the run directory, and write grid.json.

    Returns:
        The grid summary: one row per combination plus the best one
    """
    axes = config.grid_axes()
    names = list(axes)
    rows: List[Dict[str, Any]] = []
    metric, higher_is_better = None, True

    for combination in itertools.product(*(axes[name] for name in names)):
        values = dict(zip(names, combination))
        changes = {
            "top_m": int(values["top_m"]),
            "tau": values["tau"],
            "alpha": values["alpha"],
            "run_dir": os.path.join(config.run_dir, combination_name(values)),
        }
        if config.grid_lr:
            changes.update(user_lr=values["lr"], retriever_lr=values["lr"], reranker_lr=values["lr"])
        run_config = config.replace(**changes)
        logger.info("Grid run %s", run_config.run_dir)

        run_train(run_config)
        report = run_eval(run_config)
        variant = "cfrag" if "cfrag" in report.variants else next(iter(report.variants))
        metrics = report.variants[variant]
        if metric is None:
            metric, higher_is_better = primary_metric(report.samples[0].task)
            if metric not in metrics:
                metric, higher_is_better = "oracle_score", True
        rows.append({"params": values, "run_dir": run_config.run_dir, "variant": variant, "metrics": metrics})

    sign = 1.0 if higher_is_better else -1.0
    best = max(rows, key=lambda row: sign * row["metrics"][metric])
    summary = {"metric": metric, "higher_is_better": higher_is_better, "rows": rows, "best": best}
    save_json(os.path.join(config.run_dir, GRID_FILE), summary)
    logger.info("Best grid combination %s (%s = %.4f)", best["params"], metric, best["metrics"][metric])
    return summary
