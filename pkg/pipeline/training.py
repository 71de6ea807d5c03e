"""
Staged training: user encoder (contrastive), then retriever, then reranker.

Each stage freezes what the previous stages produced and reads it back from
the run directory, so stages can also be run one at a time.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence

from models.distill import DistillConfig
from models.reranker import RerankExample, Reranker, train_reranker
from models.retriever import RetrievalExample, Retriever, retrieve_topk_per_user, train_retriever
from models.user_encoder import ContrastiveConfig, train_user_encoder
from models.user_index import UserIndex, build_user_index, load_user_index, retrieve_users, save_user_index
from pipeline.checkpoints import (
    load_retriever, load_user_encoder, save_reranker, save_retriever, save_user_encoder,
)
from pipeline.config import PipelineConfig
from pipeline.context import PipelineContext
from utils.constants import RERANKER_FILE, RETRIEVER_FILE, TRAIN_REPORT_FILE, USER_ENCODER_FILE, USER_INDEX_FILE
from utils.errors import CfragError, CheckpointError, ConfigError, TrainingError
from utils.helpers import load_json, make_rng, save_json

logger = logging.getLogger(__name__)

STAGES = ("user", "retriever", "reranker")


def train_user_stage(ctx: PipelineContext) -> List[float]:
    config = ctx.config
    result = train_user_encoder(
        ctx.profiles,
        ctx.provider,
        ContrastiveConfig(
            dim=config.dim,
            max_history=config.max_history,
            heads=config.heads,
            layers=config.layers,
            tau=config.tau,
            augmentation=config.augmentation(),
            epochs=config.user_epochs,
            batch_size=config.batch_size,
            lr=config.user_lr,
            seed=config.seed,
            progress=config.progress,
        ),
    )
    save_user_encoder(ctx.path(USER_ENCODER_FILE), result.encoder)
    save_user_index(ctx.path(USER_INDEX_FILE), build_user_index(result.encoder, ctx.profiles, ctx.provider))
    return result.loss_trace


def load_index(ctx: PipelineContext) -> UserIndex:
    """The user index written by the user stage."""
    path = ctx.path(USER_INDEX_FILE)
    if not os.path.exists(path) or not os.path.exists(ctx.path(USER_ENCODER_FILE)):
        raise CheckpointError(f"no trained user encoder in {ctx.config.run_dir}; run the user stage first")
    config = ctx.config
    # raises on a dimension mismatch with the configuration
    load_user_encoder(ctx.path(USER_ENCODER_FILE), config.dim, config.max_history, config.heads, config.layers)
    return load_user_index(path, config.dim)


def retrieval_examples(ctx: PipelineContext, index: UserIndex, samples) -> List[RetrievalExample]:
    m = ctx.effective_m()
    examples = []
    for sample in samples:
        users = retrieve_users(index, sample.user_id, m)
        examples.append(RetrievalExample(
            sample=sample,
            query_vec=ctx.query_vec(sample),
            user_vec=index.embedding(sample.user_id),
            pool=ctx.pool(users),
        ))
    return examples


def train_retriever_stage(ctx: PipelineContext) -> List[float]:
    config = ctx.config
    index = load_index(ctx)
    retriever = Retriever(config.dim, make_rng(config.seed + 1), alpha=config.alpha)
    trace = train_retriever(
        retriever,
        retrieval_examples(ctx, index, ctx.train_samples),
        ctx.feedback,
        config.top_k,
        DistillConfig(steps=config.retriever_steps, lr=config.retriever_lr, seed=config.seed + 1, progress=config.progress),
    )
    save_retriever(ctx.path(RETRIEVER_FILE), retriever)
    return trace


def train_reranker_stage(ctx: PipelineContext) -> List[float]:
    config = ctx.config
    index = load_index(ctx)
    retriever = load_retriever(ctx.path(RETRIEVER_FILE), config.dim)
    examples = [
        RerankExample(
            sample=example.sample,
            user_vec=example.user_vec,
            candidates=retrieve_topk_per_user(
                retriever, example.query_vec, example.user_vec, example.pool, config.top_k, mode="personalized"
            ),
        )
        for example in retrieval_examples(ctx, index, ctx.train_samples)
    ]
    reranker = Reranker(config.dim, make_rng(config.seed + 2))
    trace = train_reranker(
        reranker,
        ctx.featurizer,
        examples,
        ctx.feedback,
        DistillConfig(steps=config.reranker_steps, lr=config.reranker_lr, seed=config.seed + 2, progress=config.progress),
    )
    save_reranker(ctx.path(RERANKER_FILE), reranker)
    return trace


STAGE_FUNCTIONS = {
    "user": train_user_stage,
    "retriever": train_retriever_stage,
    "reranker": train_reranker_stage,
}


def run_train(
    config: PipelineConfig,
    stages: Sequence[str] = STAGES,
    ctx: Optional[PipelineContext] = None,
) -> Dict[str, List[float]]:
    """
    Run the given stages in order and record their loss traces in the run's
    train report (merged with traces of stages run earlier).

    Returns:
        Loss trace per stage, including earlier runs
    """
    unknown = [stage for stage in stages if stage not in STAGE_FUNCTIONS]
    if unknown:
        raise ConfigError(f"unknown training stages {unknown}")
    ctx = ctx or PipelineContext(config)
    report_path = ctx.path(TRAIN_REPORT_FILE)
    previous = load_json(report_path, default={}) or {}
    traces: Dict[str, List[float]] = dict(previous.get("stages", {}))

    for stage in STAGES:
        if stage not in stages:
            continue
        logger.info("Training stage '%s'", stage)
        try:
            traces[stage] = STAGE_FUNCTIONS[stage](ctx)
        except (TrainingError, CheckpointError, ConfigError):
            logger.error("Stage '%s' aborted", stage)
            raise
        except CfragError as exc:
            logger.error("Stage '%s' aborted: %s", stage, exc)
            raise TrainingError(stage, 0, str(exc)) from exc
        # Later stages were trained against the old weights
        for later in STAGES[STAGES.index(stage) + 1:]:
            if later not in stages:
                traces.pop(later, None)

    save_json(report_path, {"config": config.snapshot(), "seed": config.seed, "stages": traces})
    logger.info("Wrote %s", report_path)
    return traces
