"""
Pipeline configuration.

Precedence: dataclass defaults < flat ``key = value`` config file < CLI flags.
"""

import argparse
import dataclasses
import logging
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, List, Optional

from models.augment import AugmentationConfig
from utils.constants import (
    ALPHA, ALPHA_RANGE, CONTRASTIVE_BATCH_SIZE, CROP_RATIO, EMBEDDING_DIM, ENCODER_HEADS,
    ENCODER_LAYERS, FEEDBACK_WORKERS, LEARNING_RATE, LEARNING_RATE_GRID, M_GRID, MASK_RATIO,
    MAX_HISTORY, MAX_RETRIES, REORDER_RATIO, REQUEST_TIMEOUT, RERANKER_STEPS, RETRIEVER_STEPS,
    SEED, TAU, TAU_GRID, TOP_K, TOP_M, USER_EPOCHS, USER_SELECTION,
)
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

EVAL_VARIANTS = (
    "cfrag",
    "no_user_retrieval",
    "no_preference_score",
    "untrained_retriever",
    "untrained_reranker",
    "mean_user_embedding",
    "random_users",
    "users_m_to_2m",
    "zero_shot",
    "recency",
    "random_history",
)


@dataclass
class PipelineConfig:
    # Paths
    dataset: str = "data/fixture.jsonl"
    run_dir: str = "runs/default"
    oracle: str = ""  # mock oracle file; defaults to <dataset stem>.oracle.json

    # Model sizes
    dim: int = EMBEDDING_DIM
    max_history: int = MAX_HISTORY
    heads: int = ENCODER_HEADS
    layers: int = ENCODER_LAYERS

    # Retrieval
    top_k: int = TOP_K
    top_m: int = TOP_M
    alpha: float = ALPHA
    user_selection: str = USER_SELECTION

    # Contrastive stage
    tau: float = TAU
    crop_ratio: float = CROP_RATIO
    mask_ratio: float = MASK_RATIO
    reorder_ratio: float = REORDER_RATIO
    user_epochs: int = USER_EPOCHS
    batch_size: int = CONTRASTIVE_BATCH_SIZE
    user_lr: float = LEARNING_RATE

    # Distillation stages
    retriever_steps: int = RETRIEVER_STEPS
    retriever_lr: float = LEARNING_RATE
    reranker_steps: int = RERANKER_STEPS
    reranker_lr: float = LEARNING_RATE

    # Data split and randomness
    train_fraction: float = 0.5
    seed: int = SEED

    # Providers
    embedding_provider: str = "hash"  # hash | precomputed | remote
    embedding_endpoint: str = ""
    embedding_model: str = ""
    embedding_path: str = ""
    generator: str = "mock"  # mock | chat
    llm_endpoint: str = ""
    llm_model: str = ""
    featurizer: str = "mock"  # mock | remote
    featurizer_endpoint: str = ""
    feedback_workers: int = FEEDBACK_WORKERS
    max_retries: int = MAX_RETRIES
    request_timeout: float = REQUEST_TIMEOUT

    # Evaluation and run control
    eval_variants: str = ",".join(EVAL_VARIANTS)
    grid_search: bool = False
    # Grid axes as comma-separated values; empty keeps the single value above
    grid_top_m: str = ""
    grid_tau: str = ""
    grid_alpha: str = ""
    grid_lr: str = ""
    progress: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise ConfigError on any out-of-range value."""
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if self.layers < 1 or self.max_history < 1:
            raise ConfigError("layers and max_history must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.user_selection not in ("top_m", "random", "top_m_to_2m"):
            raise ConfigError(f"unknown user_selection '{self.user_selection}'")
        AugmentationConfig(self.crop_ratio, self.mask_ratio, self.reorder_ratio)
        for name in ("user_lr", "retriever_lr", "reranker_lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("user_epochs", "retriever_steps", "reranker_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.feedback_workers < 1 or self.max_retries < 1:
            raise ConfigError("feedback_workers and max_retries must be >= 1")
        if self.embedding_provider not in ("hash", "precomputed", "remote"):
            raise ConfigError(f"unknown embedding_provider '{self.embedding_provider}'")
        if self.generator not in ("mock", "chat"):
            raise ConfigError(f"unknown generator '{self.generator}'")
        if self.featurizer not in ("mock", "remote"):
            raise ConfigError(f"unknown featurizer '{self.featurizer}'")
        unknown = [v for v in self.variants() if v not in EVAL_VARIANTS]
        if unknown:
            raise ConfigError(f"unknown eval variants {unknown}")
        self.grid_axes()
        if self.grid_search:
            self._validate_grid()

    def _validate_grid(self):
        if self.top_m not in M_GRID:
            raise ConfigError(f"top_m must be one of {M_GRID} in grid-search mode")
        if self.tau not in TAU_GRID:
            raise ConfigError(f"tau must be one of {TAU_GRID} in grid-search mode")
        if not ALPHA_RANGE[0] <= self.alpha <= ALPHA_RANGE[1]:
            raise ConfigError(f"alpha must be in {list(ALPHA_RANGE)} in grid-search mode")
        for name in ("user_lr", "retriever_lr", "reranker_lr"):
            if getattr(self, name) not in LEARNING_RATE_GRID:
                raise ConfigError(f"{name} must be one of {LEARNING_RATE_GRID} in grid-search mode")

    def grid_axes(self) -> Dict[str, List[float]]:
        """
        Values per grid axis (top_m, tau, alpha, lr), each restricted to the
        ranges grid search is allowed to sweep.
        """
        axes = {
            "top_m": _parse_axis("grid_top_m", self.grid_top_m, int) or [self.top_m],
            "tau": _parse_axis("grid_tau", self.grid_tau, float) or [self.tau],
            "alpha": _parse_axis("grid_alpha", self.grid_alpha, float) or [self.alpha],
            "lr": _parse_axis("grid_lr", self.grid_lr, float) or [self.retriever_lr],
        }
        if self.grid_top_m and any(m not in M_GRID for m in axes["top_m"]):
            raise ConfigError(f"grid_top_m values must be in {M_GRID}")
        if self.grid_tau and any(t not in TAU_GRID for t in axes["tau"]):
            raise ConfigError(f"grid_tau values must be in {TAU_GRID}")
        if self.grid_alpha and any(not ALPHA_RANGE[0] <= a <= ALPHA_RANGE[1] for a in axes["alpha"]):
            raise ConfigError(f"grid_alpha values must be in {list(ALPHA_RANGE)}")
        if self.grid_lr and any(lr not in LEARNING_RATE_GRID for lr in axes["lr"]):
            raise ConfigError(f"grid_lr values must be in {LEARNING_RATE_GRID}")
        return axes

    def variants(self):
        return [v.strip() for v in self.eval_variants.split(",") if v.strip()]

    def augmentation(self) -> AugmentationConfig:
        return AugmentationConfig(self.crop_ratio, self.mask_ratio, self.reorder_ratio)

    def oracle_path(self) -> str:
        if self.oracle:
            return self.oracle
        stem = self.dataset[:-len(".jsonl")] if self.dataset.endswith(".jsonl") else self.dataset
        return stem + ".oracle.json"

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def snapshot(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def coerce(key: str, value: str) -> Any:
    """Convert a raw string to the type of config field ``key``."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key '{key}'")
    kind = _FIELD_TYPES[key]
    try:
        if kind in (bool, "bool"):
            return parse_bool(value)
        if kind in (int, "int"):
            return int(value)
        if kind in (float, "float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    return str(value)


def load_config_file(path: str) -> Dict[str, Any]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values: Dict[str, Any] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = coerce(key, value)
    return values


def build_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Defaults, then the config file, then explicit overrides."""
    values: Dict[str, Any] = {}
    if path:
        values.update(load_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = coerce(key, value) if isinstance(value, str) else value
    config = PipelineConfig(**values)
    logger.debug("Configuration: %s", config.snapshot())
    return config


def add_config_arguments(parser: argparse.ArgumentParser):
    """One ``--field-name`` flag per config field, defaulting to None (not given)."""
    group = parser.add_argument_group("pipeline configuration")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        group.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(), help=f"(default: {f.default})")


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}


def _parse_axis(name: str, raw: str, kind: Callable[[str], Any]) -> List[Any]:
    try:
        return [kind(part.strip()) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
