"""
Finite-difference checks of the backpropagated gradients of every trained
composition. Coordinates whose true gradient is structurally zero (softmax
shift invariance) are left out, since a relative error is meaningless there.
"""

import numpy as np
import pytest

from autograd.gradcheck import finite_diff_check
from autograd.tensor import Tensor, layer_norm, log_softmax, matmul, normalize
from models.augment import MASK_TOKEN
from models.distill import candidate_distribution, distillation_loss, kl_divergence
from models.reranker import Reranker, reranker_loss
from models.retriever import Retriever, retriever_loss
from models.user_encoder import UserEncoder, infonce_loss
from utils.helpers import make_rng

SEEDS = range(20)


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def positive_distribution(rng, n):
    p = rng.uniform(0.2, 1.0, size=n)
    return p / p.sum()


def test_sum_of_squares():
    x = Tensor([1.0, -2.0, 0.5], requires_grad=True)
    assert finite_diff_check(lambda: (x * x).sum(), [x]) < 1e-8


def test_numeric_failure_is_reported_not_raised():
    x = Tensor([0.0, 0.0], requires_grad=True)
    assert finite_diff_check(lambda: normalize(x).sum(), [x]) == float("inf")


@pytest.mark.parametrize("seed", SEEDS)
def test_three_layer_composite(seed):
    rng = make_rng(seed)
    x = Tensor(rng.normal(size=(2, 4)))
    w1 = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w3 = Tensor(rng.normal(size=3), requires_grad=True)

    def f():
        return matmul(log_softmax(matmul(layer_norm(matmul(x, w1)), w2)), w3).sum()

    assert finite_diff_check(f, [w1, w2, w3]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_infonce(seed):
    rng = make_rng(seed)
    first = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    second = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    assert finite_diff_check(lambda: infonce_loss(first, second, 0.5), [first, second]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_kl_over_three_candidates(seed):
    rng = make_rng(seed)
    scores = Tensor(rng.normal(size=3), requires_grad=True)
    target = positive_distribution(rng, 3)
    assert finite_diff_check(lambda: kl_divergence(candidate_distribution(scores), target), [scores]) < 1e-4
    assert finite_diff_check(lambda: distillation_loss(scores, target), [scores]) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_user_encoder(seed):
    rng = make_rng(seed)
    encoder = UserEncoder(dim=4, max_history=6, rng=rng, heads=2, layers=1)
    documents = unit_rows(rng, 5, 4)
    view = [0, 1, MASK_TOKEN, 3, 4]
    weights = rng.normal(size=4)
    layer = encoder.layer0
    params = [
        encoder.positions,
        encoder.mask_embedding,
        layer.attention.query.weight,
        layer.attention.value.weight,
        layer.attention.out.weight,
        layer.ffn.hidden.weight,
        layer.norm2.gamma,
    ]
    assert finite_diff_check(lambda: (encoder.encode_view(view, documents) * weights).sum(), params) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_retriever_distillation(seed):
    rng = make_rng(seed)
    retriever = Retriever(4, rng, alpha=0.5)
    query, user = rng.normal(size=4), rng.normal(size=4)
    documents = unit_rows(rng, 3, 4)
    target = positive_distribution(rng, 3)
    params = [
        retriever.query_proj.weight,
        retriever.doc_proj.weight,
        retriever.user_mlp.hidden.weight,
        retriever.user_mlp.output.weight,
    ]

    def f():
        return retriever_loss(candidate_distribution(retriever.combined_scores(query, user, documents)), target)

    assert finite_diff_check(f, params, atol=1e-8) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_reranker_scores(seed):
    rng = make_rng(seed)
    reranker = Reranker(4, rng)
    reranker.scorer.output.weight.data[...] = rng.normal(size=(8, 1))
    features, user = unit_rows(rng, 3, 4), rng.normal(size=4)
    weights = rng.normal(size=3)

    def f():
        return (reranker.scores(features, user) * weights).sum()

    assert finite_diff_check(f, reranker.parameters()) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_reranker_distillation(seed):
    rng = make_rng(seed)
    reranker = Reranker(4, rng)
    reranker.scorer.output.weight.data[...] = rng.normal(size=(8, 1))
    features, user = unit_rows(rng, 3, 4), rng.normal(size=4)
    target = positive_distribution(rng, 3)

    def f():
        return reranker_loss(candidate_distribution(reranker.scores(features, user)), target)

    assert finite_diff_check(f, [reranker.scorer.output.weight]) < 1e-4
