# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Tests for the tensor kernel and reverse-mode differentiation"""

import numpy as np
import pytest

from seriesforge.numkit import DomainError
from seriesforge.numkit import Graph
from seriesforge.numkit import Rng
from seriesforge.numkit import ShapeError
from seriesforge.numkit import Tensor
from seriesforge.numkit import backward
from seriesforge.numkit import concat
from seriesforge.numkit import forward_primitive
from seriesforge.numkit import grad_check
from seriesforge.numkit import stack_time


GRAD_TOLERANCE = 1e-4
N_INSTANCES = 10


def _points(shape, low=-1.0, high=1.0):
    rng = np.random.default_rng(7)
    for _ in range(N_INSTANCES):
        yield rng.uniform(low, high, shape)


WEIGHTS = np.random.default_rng(3).uniform(-1.0, 1.0, (2, 3, 4))
MATRIX = np.random.default_rng(4).uniform(-1.0, 1.0, (4, 5))

UNARY_CASES = {
    "add": lambda x: (x + Tensor(WEIGHTS)).square().sum(),
    "sub": lambda x: (Tensor(WEIGHTS) - x).square().sum(),
    "mul": lambda x: (x * Tensor(WEIGHTS)).sum(),
    "matmul": lambda x: (x @ Tensor(MATRIX)).tanh().sum(),
    "scale": lambda x: (x * 3.0).square().sum(),
    "shift": lambda x: (x + 2.0).square().mean(),
    "sigmoid": lambda x: x.sigmoid().sum(),
    "tanh": lambda x: x.tanh().sum(),
    "square": lambda x: x.square().sum(),
    "abs": lambda x: (x * Tensor(WEIGHTS)).abs().sum(),
    "softplus": lambda x: x.softplus().sum(),
    "sum_axes": lambda x: x.sum(axes=(1, 2)).square().mean(),
    "mean_axes": lambda x: x.mean(axes=0).square().sum(),
    "broadcast": lambda x: (x.mean(axes=0).broadcast_to(x.shape) * Tensor(WEIGHTS)).sum(),
    "select_time": lambda x: x.select_time(1).square().sum(),
    "slice_time": lambda x: x.slice_time(start=1, step=2).square().sum(),
    "repeat_time": lambda x: (x.repeat_time(2).slice_time(stop=3)).square().sum(),
    "concat": lambda x: concat([x, x.square()]).sum(),
    "stack_time": lambda x: stack_time([x.select_time(2), x.select_time(0)]).tanh().sum(),
}


@pytest.mark.parametrize("case", sorted(UNARY_CASES))
def test_primitive_gradients(case):
    for point in _points((2, 3, 4)):
        assert grad_check(UNARY_CASES[case], point) < GRAD_TOLERANCE


def test_sqrt_gradient():
    for point in _points((2, 3), low=0.5, high=2.0):
        assert grad_check(lambda x: x.sqrt().sum(), point) < GRAD_TOLERANCE


def test_sqrt_rejects_negative_input():
    with pytest.raises(DomainError) as excinfo:
        Tensor([1.0, -1.0]).sqrt()
    assert excinfo.value.kind == "sqrt"
    assert "-1.0" in excinfo.value.detail
    assert isinstance(excinfo.value, ValueError)


def test_sqrt_gradient_at_zero_is_zero():
    with Graph() as graph:
        x = graph.leaf(np.zeros(3))
        grads = backward(graph, x.sqrt().sum())
    assert np.array_equal(grads[x.node].data, np.zeros(3))


def test_mean_sigmoid_gradient_at_zero():
    with Graph() as graph:
        x = graph.leaf(np.zeros(4))
        grads = backward(graph, x.sigmoid().mean())
    # sigmoid'(0) = 0.25, divided among 4 elements
    assert grads[x.node].data == pytest.approx(np.full(4, 0.0625))


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeError) as excinfo:
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((3, 2)))
    assert excinfo.value.kind == "add"
    assert excinfo.value.shapes == ((2, 3), (3, 2))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 2)))


def test_unknown_primitive():
    with pytest.raises(ValueError):
        forward_primitive("convolution", [Tensor(1.0)])


def test_untracked_outside_graph():
    x = Tensor(np.ones(3))
    y = x.square().sum()
    assert not y.tracked
    assert y.node is None
    assert y.item() == 3.0


def test_backward_requires_scalar():
    with Graph() as graph:
        x = graph.leaf(np.ones(3))
        with pytest.raises(ValueError):
            backward(graph, x.square())


def test_unused_leaf_gets_zero_gradient():
    with Graph() as graph:
        used = graph.leaf(np.ones(2), "used")
        unused = graph.leaf(np.ones((2, 2)), "unused")
        grads = graph.named(backward(graph, (used * 2.0).sum()))
    assert unused.shape == (2, 2)
    assert np.array_equal(grads["unused"], np.zeros((2, 2)))
    assert np.array_equal(grads["used"], np.full(2, 2.0))


def test_reused_value_gradients_accumulate():
    with Graph() as graph:
        x = graph.leaf(np.array([1.0, 2.0]))
        grads = backward(graph, (x * x + x).sum())
    assert np.allclose(grads[x.node].data, [3.0, 5.0])


def test_graph_records_in_order():
    with Graph() as graph:
        x = graph.leaf(np.ones(2))
        x.square().sum()
        assert len(graph) == 2


def test_constants_do_not_enter_the_graph():
    with Graph() as graph:
        x = graph.leaf(np.ones(2))
        Tensor(np.ones(2)).square()
        assert len(graph) == 0
        x.square()
        assert len(graph) == 1


def test_leaves_are_named_with_prefix():
    params = {"w": np.ones(2), "b": np.zeros(1)}
    with Graph() as graph:
        leaves = graph.leaves(params, "net/")
        loss = (leaves["w"].sum() + leaves["b"].sum()) * 2.0
        grads = graph.named(backward(graph, loss))
    assert sorted(grads) == ["net/b", "net/w"]
    assert np.array_equal(grads["net/w"], np.full(2, 2.0))


def test_grad_check_detects_wrong_gradient():
    def wrong(x):
        # finite differences run outside the graph and see a constant
        value = x.square().sum()
        return Tensor(value.data * 0.0) if not value.tracked else value

    assert grad_check(wrong, np.ones(3)) >= 0.5


def test_rng_is_deterministic():
    a, b = Rng(42), Rng(42)
    assert np.array_equal(a.uniform(size=10**6), b.uniform(size=10**6))
    assert np.array_equal(a.permutation(20), b.permutation(20))
    assert np.array_equal(a.normal(size=5), b.normal(size=5))


def test_rng_children_are_independent_and_reproducible():
    rng = Rng(1)
    first, second = rng.child(0), rng.child(1)
    assert not np.array_equal(first.uniform(size=8), second.uniform(size=8))
    assert np.array_equal(Rng(1).child(0).uniform(size=8), Rng(1).child(0).uniform(size=8))
    # deriving a child leaves the parent stream where it was
    assert np.array_equal(rng.uniform(size=8), Rng(1).uniform(size=8))


def test_rng_state_round_trip():
    rng = Rng(5)
    rng.uniform(size=3)
    state = rng.state
    expected = rng.uniform(size=4)
    rng.state = state
    assert np.array_equal(rng.uniform(size=4), expected)
