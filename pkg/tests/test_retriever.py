import numpy as np
import pytest

from corpus.dataset import Document, Sample
from corpus.embeddings import hash_embed
from models.distill import DistillConfig
from models.retriever import (
    RetrievalExample, Retriever, UserHistory, combined_score, preference_score, retrieve_topk_per_user,
    retriever_distribution, semantic_score, train_retriever,
)
from utils.errors import ConfigError, ContractError, DimensionError, FeedbackError, TrainingError
from utils.helpers import make_rng, softmax

DIM = 64


def history(user_id, texts):
    documents = [Document(f"{user_id}-d{i}", text, i) for i, text in enumerate(texts)]
    return UserHistory(user_id, documents, np.stack([hash_embed(t, DIM) for t in texts]))


@pytest.fixture
def retriever():
    return Retriever(DIM, make_rng(1), alpha=0.5)


@pytest.fixture
def pool():
    return [
        history("u0", ["red apple pie", "blue sky today", "green grass field"]),
        history("u1", ["red apple tart", "stormy sea", "quiet library"]),
    ]


def test_untrained_semantic_score_is_base_cosine(retriever):
    q, d = hash_embed("red apple", DIM), hash_embed("red apple pie", DIM)
    assert semantic_score(retriever, q, d) == pytest.approx(float(q @ d))


def test_combined_score_blends():
    blend = Retriever(DIM, make_rng(0), alpha=0.0)
    assert combined_score(blend, 0.8, 0.2) == pytest.approx(0.8)
    blend.alpha = 1.0
    assert combined_score(blend, 0.8, 0.2) == pytest.approx(0.2)
    blend.alpha = 0.5
    assert combined_score(blend, 0.8, 0.2) == pytest.approx(0.5)


def test_scores_are_cosines(retriever):
    rng = make_rng(3)
    user, doc = rng.normal(size=DIM), rng.normal(size=DIM)
    assert -1.0 <= preference_score(retriever, user, doc) <= 1.0


def silence_user_mlp(retriever):
    retriever.user_mlp.hidden.weight.data[...] = 0.0
    retriever.user_mlp.hidden.bias.data[...] = -1.0


def test_inactive_user_mlp_gives_zero_preference(retriever, pool):
    silence_user_mlp(retriever)
    query, user = hash_embed("red apple", DIM), make_rng(2).normal(size=DIM)
    assert preference_score(retriever, user, pool[0].vectors[0]) == 0.0
    scores = retriever.combined_scores(query, user, pool[0].vectors).numpy()
    assert np.allclose(scores, 0.5 * retriever.semantic_scores(query, pool[0].vectors).numpy())
    assert retrieve_topk_per_user(retriever, query, user, pool, 2)


def test_zero_alpha_never_evaluates_the_user_mlp(pool):
    semantic = Retriever(DIM, make_rng(1), alpha=0.0)
    semantic.user_mlp = None
    query, user = hash_embed("red apple", DIM), make_rng(2).normal(size=DIM)
    candidates = retrieve_topk_per_user(semantic, query, user, pool, 2)
    assert [c.preference for c in candidates] == [0.0] * len(candidates)
    assert [c.combined for c in candidates] == [c.semantic for c in candidates]
    assert np.allclose(semantic.combined_scores(query, user, pool[0].vectors).numpy(),
                       semantic.semantic_scores(query, pool[0].vectors).numpy())


def test_alpha_out_of_range():
    with pytest.raises(ConfigError):
        Retriever(DIM, make_rng(0), alpha=1.5)


def test_dimension_mismatch(retriever):
    with pytest.raises(DimensionError):
        semantic_score(retriever, np.ones(DIM - 1), np.ones(DIM))


def test_top_k_per_user_groups_by_user(retriever, pool):
    q, u = hash_embed("red apple", DIM), make_rng(2).normal(size=DIM)
    candidates = retrieve_topk_per_user(retriever, q, u, pool, 2, mode="semantic")
    assert [c.owner for c in candidates] == ["u0", "u0", "u1", "u1"]
    assert candidates[0].document.id == "u0-d0"
    assert candidates[2].document.id == "u1-d0"
    for c in candidates:
        assert c.combined == pytest.approx(0.5 * c.semantic + 0.5 * c.preference)


def test_k_larger_than_history(retriever, pool):
    q, u = hash_embed("red apple", DIM), np.ones(DIM)
    assert len(retrieve_topk_per_user(retriever, q, u, pool, 10)) == 6


def test_pretrained_mode_uses_base_cosine(retriever, pool):
    retriever.query_proj.weight.data[...] = make_rng(5).normal(size=(DIM, DIM))
    q, u = hash_embed("red apple", DIM), np.ones(DIM)
    candidates = retrieve_topk_per_user(retriever, q, u, pool, 1, mode="pretrained")
    for c in candidates:
        assert c.ranking_score == pytest.approx(float(c.vector @ q))


def test_ties_break_on_document_id(retriever):
    same = [history("u0", ["alpha beta", "alpha beta", "gamma"])]
    same[0].documents[0].id, same[0].documents[1].id = "u0-z", "u0-a"
    candidates = retrieve_topk_per_user(retriever, hash_embed("alpha beta", DIM), np.ones(DIM), same, 1, "semantic")
    assert candidates[0].document.id == "u0-a"


def test_duplicate_documents_are_kept_once(retriever, pool):
    q, u = hash_embed("red apple", DIM), np.ones(DIM)
    candidates = retrieve_topk_per_user(retriever, q, u, pool + [pool[0]], 2)
    ids = [c.document.id for c in candidates]
    assert len(ids) == len(set(ids)) == 4


def test_empty_pool_or_bad_k(retriever, pool):
    q, u = np.ones(DIM), np.ones(DIM)
    with pytest.raises(ContractError):
        retrieve_topk_per_user(retriever, q, u, [], 2)
    with pytest.raises(ContractError):
        retrieve_topk_per_user(retriever, q, u, pool, 0)
    with pytest.raises(ConfigError):
        retrieve_topk_per_user(retriever, q, u, pool, 1, mode="bm25")


def test_distribution_is_softmax_of_combined_scores():
    assert np.allclose(retriever_distribution([0.1, 0.5, -0.2]), softmax(np.array([0.1, 0.5, -0.2])))


def example(pool):
    sample = Sample("s0", "u0", "red apple", "pie", "synthetic")
    return RetrievalExample(sample, hash_embed(sample.query, DIM), make_rng(4).normal(size=DIM), pool)


def test_training_moves_toward_feedback(retriever, pool):
    def feedback(sample, documents):
        # prefers the other user's library document
        return softmax(np.array([4.0 if d.id == "u1-d2" else 0.0 for d in documents]))

    ex = example(pool)
    trace = train_retriever(retriever, [ex], feedback, 3, DistillConfig(steps=60, lr=1e-2, seed=0))
    assert len(trace) == 60
    assert trace[-1] < trace[0]


def test_zero_learning_rate_keeps_weights(retriever, pool):
    before = retriever.state_dict()
    train_retriever(retriever, [example(pool)], lambda s, d: np.full(len(d), 1.0 / len(d)), 2,
                    DistillConfig(steps=3, lr=0.0))
    for name, value in retriever.state_dict().items():
        assert np.array_equal(value, before[name])


def test_feedback_failure_aborts_training(retriever, pool):
    def failing(sample, documents):
        raise FeedbackError(sample.sample_id, [documents[0].id])

    with pytest.raises(TrainingError) as info:
        train_retriever(retriever, [example(pool)], failing, 2, DistillConfig(steps=1))
    assert info.value.sample_id == "s0"
