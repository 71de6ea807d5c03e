"""
Shared fixtures: small synthetic corpora and tiny pipeline configurations.
"""

import os

import pytest

from corpus.dataset import save_dataset
from pipeline.config import PipelineConfig
from pipeline.synthetic import SyntheticSpec, generate_synthetic
from utils.helpers import make_rng

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "goldens")


@pytest.fixture
def rng():
    return make_rng(0)


@pytest.fixture
def fixture_path():
    return os.path.join(DATA_DIR, "fixture.jsonl")


@pytest.fixture
def small_spec():
    return SyntheticSpec(clusters=2, users_per_cluster=3, history_length=8, samples_per_user=2)


@pytest.fixture
def synthetic_corpus(small_spec):
    """(profiles, samples, oracle) for 2 clusters of 3 users."""
    return generate_synthetic(small_spec, make_rng(17))


@pytest.fixture
def synthetic_dataset(tmp_path, synthetic_corpus):
    """The small synthetic corpus written to disk with its oracle beside it."""
    profiles, samples, oracle = synthetic_corpus
    path = str(tmp_path / "synth.jsonl")
    save_dataset(path, profiles, samples)
    oracle.save(str(tmp_path / "synth.oracle.json"))
    return path


def tiny_config(dataset: str, run_dir: str, **changes) -> PipelineConfig:
    """A pipeline configuration small enough to train in seconds."""
    values = dict(
        dataset=dataset,
        run_dir=run_dir,
        dim=16,
        max_history=8,
        heads=2,
        layers=1,
        top_k=2,
        top_m=3,
        user_epochs=2,
        batch_size=4,
        retriever_steps=6,
        reranker_steps=6,
        feedback_workers=2,
        progress=False,
    )
    values.update(changes)
    return PipelineConfig(**values)


@pytest.fixture
def make_config():
    return tiny_config


@pytest.fixture
def tiny_run(tmp_path, synthetic_dataset):
    return tiny_config(synthetic_dataset, str(tmp_path / "run"))
