import numpy as np
import pytest

from donbench import rng
from donbench.autodiff import Tensor, concat, mse_loss
from donbench.errors import GraphError

from gradcheck import finite_difference_check

N_CONFIGS = 100


def _leaf(stream, shape, scale=1.0):
    return Tensor(stream.standard_normal(shape) * scale, requires_grad=True)


def test_perfect_fit_gives_zero_loss_and_gradients():
    stream = rng.stream(0)
    w = _leaf(stream, (4, 3))
    x = Tensor(stream.standard_normal((5, 4)))
    target = (x.data @ w.data).copy()
    loss = mse_loss(x @ w, target)
    assert float(loss.data) == 0.0
    loss.backward()
    assert np.array_equal(w.grad, np.zeros_like(w.data))


@pytest.mark.parametrize("op", ["add", "mul", "matmul", "tanh", "relu",
                                "sigmoid", "square"])
def test_primitive_gradients_match_finite_differences(op):
    worst = 0.0
    for cfg in range(N_CONFIGS // 10):
        stream = rng.stream(1000 + cfg)
        a = _leaf(stream, (3, 4))
        b = _leaf(stream, (3, 4))
        w = _leaf(stream, (4, 2))
        target = stream.standard_normal((3, 4))
        target_m = stream.standard_normal((3, 2))

        if op == "add":
            fn = lambda: mse_loss(a + b, target)
        elif op == "mul":
            fn = lambda: mse_loss(a * b, target)
        elif op == "matmul":
            fn = lambda: mse_loss(a @ w, target_m)
        elif op == "tanh":
            fn = lambda: mse_loss(a.tanh(), target)
        elif op == "relu":
            fn = lambda: mse_loss(a.relu() + b * 0.1, target)
        elif op == "sigmoid":
            fn = lambda: mse_loss(a.sigmoid(), target)
        else:
            fn = lambda: mse_loss(a.square(), target)
        worst = max(worst, finite_difference_check([a, b, w], fn))
    assert worst < 1e-5


def test_broadcast_add_gradient():
    stream = rng.stream(3)
    x = _leaf(stream, (6, 4))
    bias = _leaf(stream, (4,))
    target = stream.standard_normal((6, 4))
    err = finite_difference_check([x, bias], lambda: mse_loss(x + bias, target))
    assert err < 1e-5


def test_scalar_broadcast_gradient():
    stream = rng.stream(4)
    x = _leaf(stream, (5, 3))
    target = stream.standard_normal((5, 3))
    err = finite_difference_check([x], lambda: mse_loss(1.0 - x * 2.0, target))
    assert err < 1e-5


def test_shared_subgraph_accumulates():
    x = Tensor(np.array([[2.0]]), requires_grad=True)
    y = (x * 3.0) + (x * 4.0)
    y.sum().backward()
    assert np.allclose(x.grad, 7.0)


def test_reshape_transpose_concat_gradients():
    stream = rng.stream(5)
    a = _leaf(stream, (2, 6))
    b = _leaf(stream, (3, 4))
    target = stream.standard_normal((2, 3, 4))

    def fn():
        t = a.reshape(2, 3, 2).transpose((0, 1, 2))
        u = b.reshape(1, 3, 4)
        merged = concat([t, t], axis=2) + u
        return mse_loss(merged, target)

    assert finite_difference_check([a, b], fn) < 1e-5


def test_sum_and_mean_gradients():
    stream = rng.stream(6)
    a = _leaf(stream, (4, 3))

    loss = (a * a).sum()
    loss.backward()
    assert np.allclose(a.grad, 2.0 * a.data)

    a.grad = None
    loss = a.mean()
    loss.backward()
    assert np.allclose(a.grad, np.full((4, 3), 1.0 / 12.0))


def test_matmul_shape_mismatch_raises_grapherror():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((2, 3)))
    with pytest.raises(GraphError, match="matmul"):
        a @ b


def test_add_shape_mismatch_raises_grapherror():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4,)))
    with pytest.raises(GraphError, match="add"):
        a + b


def test_mse_shape_mismatch_raises_grapherror():
    with pytest.raises(GraphError, match="mse_loss"):
        mse_loss(Tensor(np.zeros((2, 2))), np.zeros((2, 3)))


def test_backward_requires_scalar():
    t = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(GraphError):
        (t * 1.0).backward()


def test_no_grad_tracking_for_constants():
    a = Tensor(np.ones((2, 2)))
    b = Tensor(np.ones((2, 2)))
    out = a @ b
    assert not out.requires_grad
    assert out._parents == ()


def test_relu_zero_blocks_gradient():
    x = Tensor(np.array([[-1.5, 2.0]]), requires_grad=True)
    (x.relu().sum()).backward()
    assert np.array_equal(x.grad, np.array([[0.0, 1.0]]))


def test_sigmoid_extreme_values_saturate_cleanly():
    x = Tensor(np.array([[-1000.0, 0.0, 1000.0]]))
    out = x.sigmoid()
    assert np.array_equal(out.data, np.array([[0.0, 0.5, 1.0]]))


def test_deterministic_graph_evaluation():
    stream = rng.stream(8)
    a_data = stream.standard_normal((8, 8))
    results = []
    for _ in range(2):
        a = Tensor(a_data.copy(), requires_grad=True)
        loss = mse_loss((a @ a.tanh()).sigmoid(), np.zeros((8, 8)))
        loss.backward()
        results.append((float(loss.data), a.grad.copy()))
    assert results[0][0] == results[1][0]
    assert np.array_equal(results[0][1], results[1][1])
