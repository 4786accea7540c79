from __future__ import annotations

import numpy as np
import pytest

from hypothesis import given, settings, strategies as st

from ccgs.core.constants import SENTINEL
from ccgs.errors import ConfigError, GradientError, ShapeError
from ccgs.numcore import (
    ParameterSet,
    Tape,
    Tensor,
    active_tape,
    adamw_step,
    add_broadcast,
    check_gradients,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    expand_rows,
    flatten,
    masked_fill,
    matmul,
    mean,
    mul,
    mul_broadcast,
    relu,
    scale,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
)
from ccgs.utils.random import np_random



def _param(shape, seed=0, name=None) -> Tensor:
    return Tensor(np_random(seed).normal(size=shape), requires_grad=True, name=name)


def test_tape_records_only_when_active():
    x = _param((2, 2))
    assert active_tape() is None
    relu(x)
    with Tape() as tape:
        assert active_tape() is tape
        relu(x)
        relu(constant(np.ones((2, 2))))
    assert len(tape) == 1
    assert active_tape() is None


def test_relu_backward():
    x = Tensor([[1.0, -2.0, 3.0]], requires_grad=True)
    with Tape() as tape:
        loss = sum_(relu(x))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0, 1.0]])


def test_shared_input_accumulates():
    x = Tensor([[2.0]], requires_grad=True)
    with Tape() as tape:
        loss = sum_(mul(x, x))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [[4.0]])


def test_backward_misuse():
    x = _param((2, 3))
    with Tape() as tape:
        y = relu(x)
        loss = sum_(y)
    with pytest.raises(GradientError):
        tape.backward(y)
    tape.backward(loss)
    with pytest.raises(GradientError):
        tape.backward(loss)

    with Tape() as other:
        pass
    with pytest.raises(GradientError):
        other.backward(loss)


def test_accumulating_backward():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape() as tape:
        loss = sum_(x)
    tape.backward(loss)
    tape.backward(loss, accumulate=True)
    np.testing.assert_array_equal(x.grad, [[2.0, 2.0]])


def test_shape_errors():
    a, b = _param((2, 3)), _param((2, 3), seed=1)
    with pytest.raises(ShapeError) as info:
        matmul(a, b)
    assert info.value.op == 'matmul'
    assert info.value.shapes == ((2, 3), (2, 3))
    with pytest.raises(ShapeError):
        add_broadcast(a, _param((1, 2)))
    with pytest.raises(ShapeError):
        slice_(a, (1, 4))


@pytest.mark.parametrize('op', [
    lambda a, b, c: sum_(matmul(a, transpose(b))),
    lambda a, b, c: sum_(mul(softmax(matmul(a, transpose(b)), axis=1), softmax(matmul(a, transpose(b)), axis=0))),
    lambda a, b, c: cross_entropy(flatten(matmul(a, transpose(b))), 3),
    lambda a, b, c: sum_(mul(concat([a, b], axis=0), concat([b, a], axis=0))),
    lambda a, b, c: sum_(mul(slice_(a, None, (1, 3)), slice_(b, (0, 2), (0, 2)))),
    lambda a, b, c: sum_(mul(expand_rows(mean(a, axis=0), 2), b)),
    lambda a, b, c: sum_(mul(mul_broadcast(a, c), add_broadcast(b, c))),
    lambda a, b, c: sum_(mul(sub(a, b), scale(a, 0.5))),
    lambda a, b, c: sum_(mul(mean(a, axis=1, keepdims=False), mean(b, axis=1, keepdims=False))),
])
def test_op_gradients(op):
    a, b, c = _param((2, 3), 1, 'a'), _param((2, 3), 2, 'b'), _param((1, 3), 3, 'c')
    errors = check_gradients(lambda: op(a, b, c), [a, b, c], eps=1e-5)
    assert max(errors.values()) < 1e-4


def test_embedding_gradient_scatters():
    table = _param((5, 2), name='table')
    ids = np.array([1, 3, 1])
    with Tape() as tape:
        loss = sum_(embedding(table, ids))
    tape.backward(loss)
    np.testing.assert_array_equal(table.grad[:, 0], [0.0, 2.0, 0.0, 1.0, 0.0])
    with pytest.raises(ShapeError):
        embedding(table, [5])


def test_masked_fill_blocks_gradient():
    x = _param((2, 2))
    mask = np.array([[False, True], [False, False]])
    with Tape() as tape:
        y = masked_fill(x, mask)
        loss = sum_(y)
    tape.backward(loss)
    assert y.data[0, 1] == SENTINEL
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0], [1.0, 1.0]])


def test_softmax_ignores_sentinel():
    row = constant([[0.5, SENTINEL, -1.0, SENTINEL]])
    probs = softmax(row, axis=1).data
    assert probs[0, 1] == 0.0 and probs[0, 3] == 0.0
    assert probs.sum() == pytest.approx(1.0)


def test_cross_entropy():
    logits = constant([[0.0, 0.0, 0.0, 0.0]])
    assert cross_entropy(logits, 2).item() == pytest.approx(np.log(4.0))
    with pytest.raises(GradientError):
        cross_entropy(logits, 4)
    with pytest.raises(GradientError):
        cross_entropy(constant([[1.0, SENTINEL]]), 1)


@pytest.mark.parametrize('row, target, expected', [
    ([1e6, 0.0, 0.0], 0, 0.0),
    ([1e6, 0.0, 0.0], 1, 1e6),
    ([0.0] * 6, 3, np.log(6.0)),
    ([2.5] * 9, 8, np.log(9.0)),
    ([0.0, SENTINEL, 0.0, 0.0, SENTINEL, 0.0, 0.0, 0.0], 5, np.log(6.0)),
    ([-3.0], 0, 0.0),
])
def test_cross_entropy_closed_forms(row, target, expected):
    value = cross_entropy(constant([row]), target).item()
    assert np.isfinite(value)
    assert value == pytest.approx(expected, abs=1e-9)


def test_dropout_expectation():
    x = constant(np.ones((1, 100_000)))
    for seed in range(5):
        out = dropout(x, 0.1, train=True, seed=seed).data
        assert abs(out.mean() - 1.0) < 0.01
        assert abs((out == 0).mean() - 0.1) < 0.01
        np.testing.assert_allclose(out[out != 0], 1 / 0.9)


def test_dropout():
    x = constant(np.ones((50, 40)))
    assert dropout(x, 0.5, train=False) is x
    a = dropout(x, 0.5, train=True, seed=3).data
    b = dropout(x, 0.5, train=True, seed=3).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    assert 0.3 < (a == 0).mean() < 0.7
    with pytest.raises(ConfigError):
        dropout(x, 1.0, train=True)

    w = _param((3, 3))
    errors = check_gradients(lambda: sum_(mul(dropout(w, 0.3, True, seed=1), w)), [w], eps=1e-5)
    assert errors["0"] < 1e-4


def test_float32_preserved():
    x = Tensor(np.ones((2, 2)), requires_grad=True, dtype=np.float32)
    y = relu(matmul(x, x))
    assert y.dtype == np.float32
    assert dropout(x, 0.2, train=True, seed=0).dtype == np.float32


@settings(max_examples=25, deadline=None)
@given(
    logits=st.lists(st.floats(-30, 30), min_size=2, max_size=12),
    data=st.data(),
)
def test_cross_entropy_is_nonnegative(logits, data):
    target = data.draw(st.integers(0, len(logits) - 1))
    value = cross_entropy(constant([logits]), target).item()
    assert value >= -1e-12
    assert np.isfinite(value)



### Optimizer

def test_parameter_set():
    params = ParameterSet()
    params.add('w', np.ones((2, 3)))
    params.add('b', np.zeros((1, 3)))
    assert params.names() == ['w', 'b']
    assert params.num_values() == 9
    assert 'w' in params and 'x' not in params

    other = params.copy()
    assert other.equals(params)
    other['w'].data[0, 0] = 2.0
    assert not other.equals(params)
    assert params['w'].data[0, 0] == 1.0
    assert params.astype(np.float32)['w'].dtype == np.float32


def test_adamw_first_step():
    params = ParameterSet()
    w = params.add('w', np.array([[1.0, -2.0, 0.5]]))
    grad = np.array([[0.1, -0.3, 2.0]])
    w.grad = grad.copy()

    lr, eps, wd = 0.01, 1e-8, 0.1
    adamw_step(params, lr, eps=eps, weight_decay=wd)

    expected = np.array([[1.0, -2.0, 0.5]])
    expected = expected - lr * wd * expected - lr * grad / (np.abs(grad) + eps)
    np.testing.assert_allclose(w.data, expected, rtol=1e-12)
    assert params.step == 1
    assert w.grad is None
    np.testing.assert_allclose(params.m['w'], 0.1 * grad)
    np.testing.assert_allclose(params.v['w'], 0.001 * grad * grad)


def test_adamw_subset_and_errors():
    params = ParameterSet()
    a = params.add('a', np.ones((1, 2)))
    b = params.add('b', np.ones((1, 2)))
    with pytest.raises(GradientError):
        adamw_step(params, 0.1)

    a.grad = np.ones((1, 2))
    adamw_step(params, 0.1, names=['a'])
    np.testing.assert_array_equal(b.data, np.ones((1, 2)))
    assert np.all(a.data < 1.0)
    with pytest.raises(ConfigError):
        adamw_step(params, 0.0, names=[])


def test_adamw_minimizes_quadratic():
    params = ParameterSet()
    w = params.add('w', np.array([[3.0, -4.0]]))
    for _ in range(500):
        with Tape() as tape:
            loss = sum_(mul(w, w))
        tape.backward(loss)
        adamw_step(params, 0.05)
    assert np.abs(w.data).max() < 0.05
