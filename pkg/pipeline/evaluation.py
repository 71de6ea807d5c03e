"""
Evaluation of the trained pipeline and its ablation variants on the test split.

For each test sample: top-m users -> top-k documents per user -> rerank to
top-k -> prompt -> generate -> extract -> score. Variants switch off one
mechanism at a time; the non-collaborative baselines skip retrieval.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from autograd.tensor import no_grad
from corpus.dataset import Document, Sample
from feedback.evaluation import eval_output
from metrics.rouge import rouge1, rougeL
from metrics.scoring import classification_metrics, extract_prediction, regression_metrics
from models.reranker import Reranker, rerank_topk
from models.retriever import Retriever, retrieve_topk_per_user
from models.user_index import UserIndex, build_mean_user_index, retrieve_users
from pipeline.checkpoints import load_reranker, load_retriever
from pipeline.config import PipelineConfig
from pipeline.context import PipelineContext
from pipeline.prompts import LAMP2_TAGS
from pipeline.report import RunReport, SampleResult, emit_report
from pipeline.training import load_index
from utils.constants import CLASSIFICATION_TASKS, GENERATION_TASKS, RERANKER_FILE, RETRIEVER_FILE, TRAIN_REPORT_FILE
from utils.errors import ConfigError
from utils.helpers import load_json, make_rng, prompt_key

logger = logging.getLogger(__name__)

BASELINES = ("zero_shot", "recency", "random_history")
CLASSIFICATION_LABELS = {"LaMP-1": ("[1]", "[2]"), "LaMP-2": LAMP2_TAGS}


@dataclass
class VariantSetup:
    """The models and user selection one variant retrieves with."""

    index: UserIndex  # picks the users
    retriever: Retriever
    reranker: Reranker
    m: int
    selection: str
    rng: Optional[np.random.Generator] = None


@dataclass
class Selection:
    documents: List[Document]
    retriever_top1: Optional[float] = None
    reranker_top1: Optional[float] = None


def primary_metric(task: str) -> Tuple[str, bool]:
    """(metric name, higher is better) used to rank grid-search runs."""
    if task in GENERATION_TASKS:
        return "rouge1", True
    if task in CLASSIFICATION_TASKS:
        return "accuracy", True
    return "mae", False


def fractional_top1(ids: Sequence[str], scores: Sequence[float], target: str) -> float:
    """1/t if ``target`` is among the t ids tied at the top score, else 0."""
    if len(scores) == 0:
        return 0.0
    best = max(scores)
    tied = [doc_id for doc_id, score in zip(ids, scores) if score == best]
    return 1.0 / len(tied) if target in tied else 0.0


def build_setups(
    ctx: PipelineContext,
    index: UserIndex,
    retriever: Retriever,
    reranker: Reranker,
) -> Dict[str, VariantSetup]:
    config = ctx.config
    m = ctx.effective_m()
    variants = config.variants()
    setups: Dict[str, VariantSetup] = {}

    def rng():
        return make_rng(config.seed + 3)

    for variant in variants:
        if variant == "cfrag":
            setups[variant] = VariantSetup(index, retriever, reranker, m, config.user_selection, rng())
        elif variant == "no_user_retrieval":
            setups[variant] = VariantSetup(index, retriever, reranker, 1, "top_m")
        elif variant == "no_preference_score":
            semantic = load_retriever(ctx.path(RETRIEVER_FILE), config.dim)
            semantic.alpha = 0.0
            setups[variant] = VariantSetup(index, semantic, reranker, m, config.user_selection, rng())
        elif variant == "untrained_retriever":
            fresh = Retriever(config.dim, make_rng(config.seed + 1), alpha=config.alpha)
            setups[variant] = VariantSetup(index, fresh, reranker, m, config.user_selection, rng())
        elif variant == "untrained_reranker":
            fresh = Reranker(config.dim, make_rng(config.seed + 2))
            setups[variant] = VariantSetup(index, retriever, fresh, m, config.user_selection, rng())
        elif variant == "mean_user_embedding":
            mean_index = build_mean_user_index(ctx.profiles, ctx.provider)
            setups[variant] = VariantSetup(mean_index, retriever, reranker, m, "top_m")
        elif variant == "random_users":
            setups[variant] = VariantSetup(index, retriever, reranker, m, "random", rng())
        elif variant == "users_m_to_2m":
            setups[variant] = VariantSetup(index, retriever, reranker, m, "top_m_to_2m")
    return setups


def retrieve_for_sample(ctx: PipelineContext, setup: VariantSetup, index: UserIndex, sample: Sample) -> Selection:
    """
    The final top-k documents for one sample. ``index`` supplies e_u for
    scoring; ``setup.index`` only chooses the users.
    """
    k = ctx.config.top_k
    users = retrieve_users(setup.index, sample.user_id, setup.m, setup.selection, setup.rng)
    query_vec = ctx.query_vec(sample)
    user_vec = index.embedding(sample.user_id)
    pool = ctx.pool(users)

    candidates = retrieve_topk_per_user(setup.retriever, query_vec, user_vec, pool, k, mode="personalized")
    reranked = rerank_topk(setup.reranker, ctx.featurizer, sample.query, candidates, user_vec, len(candidates))
    selection = Selection(documents=[r.candidate.document for r in reranked[:k]])

    target = ctx.evidence.get(sample.sample_id)
    if target is not None:
        ids, scores = [], []
        with no_grad():
            for user in pool:
                ids.extend(doc.id for doc in user.documents)
                scores.extend(setup.retriever.combined_scores(query_vec, user_vec, user.vectors).numpy().tolist())
        selection.retriever_top1 = fractional_top1(ids, scores, target)
        selection.reranker_top1 = fractional_top1(
            [r.candidate.document.id for r in reranked], [r.score for r in reranked], target
        )
    return selection


def baseline_documents(ctx: PipelineContext, variant: str, sample: Sample, rng: np.random.Generator) -> List[Document]:
    """Documents from the user's own history for the non-collaborative baselines."""
    history = ctx.profiles[sample.user_id].history
    k = ctx.config.top_k
    if variant == "zero_shot":
        return []
    if variant == "recency":
        return list(reversed(history[-k:]))  # most recent first
    if variant == "random_history":
        chosen = rng.choice(len(history), size=min(k, len(history)), replace=False)
        return [history[int(i)] for i in chosen]
    raise ConfigError(f"unknown baseline '{variant}'")


def task_metrics(rows: Sequence[SampleResult]) -> Dict[str, float]:
    """Task metrics, mean oracle score and planted-evidence diagnostics."""
    metrics: Dict[str, float] = {}
    tasks = sorted({row.task for row in rows})
    for task in tasks:
        prefix = "" if len(tasks) == 1 else f"{task}/"
        subset = [row for row in rows if row.task == task]
        predictions = [row.prediction for row in subset]
        targets = [row.target for row in subset]
        if task in GENERATION_TASKS:
            metrics[prefix + "rouge1"] = float(np.mean([rouge1(p, t).f1 for p, t in zip(predictions, targets)]))
            metrics[prefix + "rougeL"] = float(np.mean([rougeL(p, t).f1 for p, t in zip(predictions, targets)]))
        elif task in CLASSIFICATION_TASKS:
            labels = CLASSIFICATION_LABELS.get(task) or sorted(set(targets))
            accuracy, f1 = classification_metrics(predictions, targets, labels)
            metrics[prefix + "accuracy"] = accuracy
            metrics[prefix + "f1"] = f1
        else:
            mae, rmse = regression_metrics(predictions, targets)
            metrics[prefix + "mae"] = mae
            metrics[prefix + "rmse"] = rmse

    metrics["oracle_score"] = float(np.mean([row.score for row in rows]))
    for name in ("evidence_hit", "retriever_top1", "reranker_top1"):
        values = [getattr(row, name) for row in rows if getattr(row, name) is not None]
        if values:
            metrics["hit_rate" if name == "evidence_hit" else name] = float(np.mean(values))
    return metrics


def _generate(ctx: PipelineContext, prompt: str, sample: Sample) -> Tuple[str, float]:
    key = prompt_key(ctx.generator.provider_id, prompt)
    output = ctx.cache.get(key)
    if output is None:
        output = ctx.generator.generate(prompt)
        score = eval_output(sample.task, sample.target, extract_prediction(sample.task, output))
        ctx.cache.put(key, output, score)
        return output, score
    return output, eval_output(sample.task, sample.target, extract_prediction(sample.task, output))


def run_eval(config: PipelineConfig, ctx: Optional[PipelineContext] = None, write: bool = True) -> RunReport:
    """
    Evaluate every configured variant on the test split.

    Args:
        config: Run configuration; checkpoints are read from its run directory
        ctx: Reuse an already loaded context
        write: Emit the report files into the run directory

    Returns:
        The run report
    """
    ctx = ctx or PipelineContext(config)
    index = load_index(ctx)
    retriever = load_retriever(ctx.path(RETRIEVER_FILE), config.dim)
    reranker = load_reranker(ctx.path(RERANKER_FILE), config.dim)
    setups = build_setups(ctx, index, retriever, reranker)

    plans: List[Tuple[str, Sample, Selection]] = []
    for variant in config.variants():
        rng = make_rng(config.seed + 4)
        for sample in ctx.test_samples:
            if variant in BASELINES:
                selection = Selection(documents=baseline_documents(ctx, variant, sample, rng))
            else:
                selection = retrieve_for_sample(ctx, setups[variant], index, sample)
            plans.append((variant, sample, selection))

    prompts = [ctx.prompt(sample, selection.documents) for _, sample, selection in plans]
    with ThreadPoolExecutor(max_workers=config.feedback_workers) as pool:
        generations = list(pool.map(lambda i: _generate(ctx, prompts[i], plans[i][1]), range(len(plans))))

    rows: List[SampleResult] = []
    for (variant, sample, selection), (output, score) in zip(plans, generations):
        evidence = ctx.evidence.get(sample.sample_id)
        ids = [doc.id for doc in selection.documents]
        rows.append(SampleResult(
            variant=variant,
            sample_id=sample.sample_id,
            user_id=sample.user_id,
            task=sample.task,
            target=sample.target,
            documents=ids,
            output=output,
            prediction=extract_prediction(sample.task, output),
            score=score,
            evidence_hit=None if evidence is None else float(evidence in ids),
            retriever_top1=selection.retriever_top1,
            reranker_top1=selection.reranker_top1,
        ))

    variants = {}
    for variant in config.variants():
        variants[variant] = task_metrics([row for row in rows if row.variant == variant])
        logger.info("%s: %s", variant, ", ".join(f"{k}={v:.4f}" for k, v in variants[variant].items()))

    train_report = load_json(ctx.path(TRAIN_REPORT_FILE), default={}) or {}
    report = RunReport(
        config=config.snapshot(),
        seed=config.seed,
        stages=train_report.get("stages", {}),
        variants=variants,
        samples=rows,
    )
    if write:
        emit_report(report, config.run_dir)
    return report
