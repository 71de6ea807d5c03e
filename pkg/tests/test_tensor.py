import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from autograd.tensor import (
    Tensor, concat, cosine, exp, log, logsumexp, matmul, no_grad, normalize, relu, softmax,
)
from utils.errors import ContractError, DimensionError, NumericError

finite = st.floats(min_value=-20, max_value=20, allow_nan=False, allow_infinity=False)


def test_matmul_with_identity_is_noop():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, Tensor(np.eye(2))).numpy(), a.numpy())


def test_softmax_of_equal_scores_is_uniform():
    assert np.allclose(softmax(Tensor([0.0, 0.0])).numpy(), [0.5, 0.5])


def test_cosine_of_opposite_vectors():
    v = np.array([1.0, 2.0, -3.0])
    assert cosine(Tensor(v), Tensor(-v)).item() == pytest.approx(-1.0)


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    leaves = (x * x).backward()
    assert x.grad == pytest.approx(6.0)
    assert leaves[x] == pytest.approx(6.0)


def test_gradients_accumulate_across_backward_calls():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    (x * x).backward()
    assert x.grad == pytest.approx(12.0)
    x.zero_grad()
    assert x.grad == 0.0


def test_constant_loss_has_zero_gradient():
    x = Tensor([1.0, -2.0], requires_grad=True)
    loss = (x * 0.0).sum() + 5.0
    loss.backward()
    assert np.array_equal(x.grad, np.zeros(2))


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_overflow_is_reported():
    with pytest.raises(NumericError):
        exp(Tensor(1000.0))


def test_log_of_non_positive_input():
    with pytest.raises(NumericError):
        log(Tensor([1.0, 0.0]))


def test_division_by_zero():
    with pytest.raises(NumericError):
        Tensor(1.0) / Tensor(0.0)


def test_normalize_zero_vector():
    with pytest.raises(NumericError):
        normalize(Tensor(np.zeros(3)))


def test_no_grad_records_nothing():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad
    assert (x * x).sum().requires_grad


def test_repeated_index_scatters_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    x[[0, 0, 1]].sum().backward()
    assert np.array_equal(x.grad, [2.0, 1.0, 0.0])


def test_concat_splits_gradient():
    a = Tensor(np.ones((1, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    (concat([a, b]) * Tensor([[1.0], [2.0], [3.0]])).sum().backward()
    assert np.array_equal(a.grad, [[1.0, 1.0]])
    assert np.array_equal(b.grad, [[2.0, 2.0], [3.0, 3.0]])


def test_relu_gradient_masks_negative_inputs():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    relu(x).sum().backward()
    assert np.array_equal(x.grad, [0.0, 1.0])


def test_broadcast_add_reduces_gradient():
    x = Tensor(np.ones((3, 2)))
    b = Tensor(np.zeros(2), requires_grad=True)
    (x + b).sum().backward()
    assert np.array_equal(b.grad, [3.0, 3.0])


@settings(deadline=None, max_examples=50)
@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_rows_sum_to_one(values):
    rows = softmax(Tensor(values), axis=-1).numpy()
    assert np.allclose(rows.sum(axis=-1), 1.0)
    assert np.all(rows > 0.0)


@settings(deadline=None, max_examples=50)
@given(arrays(np.float64, 5, elements=finite))
def test_logsumexp_matches_numpy(values):
    expected = np.log(np.exp(values - values.max()).sum()) + values.max()
    assert logsumexp(Tensor(values)).item() == pytest.approx(expected)
