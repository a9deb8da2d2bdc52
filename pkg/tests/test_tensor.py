import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasecond import tensor as T
from phasecond.errors import DegenerateRowError, GraphError, ShapeError
from phasecond.tensor import Tensor, backward, grad_check


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_unit_vector_selection(self):
        out = T.matmul(Tensor([[1.0, 0.0]]), Tensor([[2.0], [5.0]]))
        assert out.data.tolist() == [[2.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a = rand(rng, 3, 4)
        b = Tensor(rng.standard_normal((4, 2)))
        err = grad_check(lambda x: T.tsum(T.matmul(x, b)), a)
        assert err < 1e-6
        a2 = Tensor(rng.standard_normal((3, 4)))
        b2 = rand(rng, 4, 2)
        err = grad_check(lambda x: T.tsum(T.matmul(a2, x)), b2)
        assert err < 1e-6


class TestSoftmaxRows:
    def test_symmetry(self):
        out = T.softmax_rows(Tensor([[0.0, 0.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_scalar_value(self):
        out = T.softmax_rows(Tensor([[1.0, 0.0]]))
        e = np.e
        assert np.allclose(out.data, [[e / (e + 1), 1 / (e + 1)]], atol=5e-6)
        assert abs(out.data[0, 0] - 0.73106) < 5e-6

    def test_single_unmasked_entry(self):
        out = T.softmax_rows(Tensor([[5.0, 5.0]]), mask=np.array([[True, False]]))
        assert out.data.tolist() == [[1.0, 0.0]]

    def test_fully_masked_row_raises(self):
        with pytest.raises(DegenerateRowError):
            T.softmax_rows(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))

    def test_rows_sum_to_one_large_magnitude(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.uniform(-1e4, 1e4, size=(8, 6)))
        out = T.softmax_rows(x)
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-9)

    def test_gradient(self):
        rng = np.random.default_rng(2)
        x = rand(rng, 3, 5)
        w = rng.standard_normal((3, 5))
        err = grad_check(lambda t: T.tsum(T.mul(T.softmax_rows(t), Tensor(w))), x)
        assert err < 1e-6

    def test_masked_gradient(self):
        rng = np.random.default_rng(3)
        mask = np.array([[True, False, True], [True, True, False]])
        x = rand(rng, 2, 3)
        w = rng.standard_normal((2, 3))
        err = grad_check(
            lambda t: T.tsum(T.mul(T.softmax_rows(t, mask=mask), Tensor(w))), x
        )
        assert err < 1e-6


class TestElementwise:
    def test_sigmoid_midpoint(self):
        assert T.sigmoid(Tensor([0.0])).data.tolist() == [0.5]

    def test_relu(self):
        assert T.relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]

    def test_relu_gradient_at_zero_is_zero(self):
        x = Tensor([0.0], requires_grad=True)
        backward(T.tsum(T.relu(x)))
        assert x.grad.tolist() == [0.0]

    def test_tanh_gradient(self):
        rng = np.random.default_rng(4)
        x = rand(rng, 2, 3)
        assert grad_check(lambda t: T.tsum(T.tanh(t)), x) < 1e-6

    def test_mul_broadcast_trailing(self):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.arange(4.0), requires_grad=True)
        out = T.mul(a, b)
        assert out.data.shape == (3, 4)
        backward(T.tsum(out))
        assert b.grad.tolist() == [3.0, 3.0, 3.0, 3.0]

    def test_incompatible_shapes(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 3))))
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((3, 4))), Tensor(np.zeros((1, 4))))


class TestBackward:
    def test_square_analytic(self):
        x = Tensor(3.0, requires_grad=True)
        backward(T.mul(x, x))
        assert x.grad == pytest.approx(6.0)

    def test_softmax_row_sum_has_zero_gradient(self):
        rng = np.random.default_rng(5)
        x = rand(rng, 3, 4)
        backward(T.tsum(T.softmax_rows(x)))
        assert np.allclose(x.grad, 0.0, atol=1e-12)

    def test_composite_two_layer(self):
        rng = np.random.default_rng(6)
        w1 = Tensor(rng.standard_normal((4, 5)))
        w2 = Tensor(rng.standard_normal((5, 1)))
        x = rand(rng, 2, 4)

        def f(t):
            h = T.tanh(T.matmul(t, w1))
            return T.tsum(T.sigmoid(T.matmul(h, w2)))

        assert grad_check(f, x) < 1e-5

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(GraphError):
            backward(Tensor(np.zeros((2, 2)), requires_grad=True))

    def test_fan_out_accumulation(self):
        rng = np.random.default_rng(7)
        base = rng.standard_normal((3, 3))

        x = Tensor(base.copy(), requires_grad=True)
        backward(T.add(T.tsum(T.tanh(x)), T.tsum(T.mul(x, x))))
        combined = x.grad.copy()

        xa = Tensor(base.copy(), requires_grad=True)
        backward(T.tsum(T.tanh(xa)))
        xb = Tensor(base.copy(), requires_grad=True)
        backward(T.tsum(T.mul(xb, xb)))
        assert np.all(np.abs(combined - (xa.grad + xb.grad)) <= 1e-12)

    def test_backward_bitwise_deterministic(self):
        rng = np.random.default_rng(8)
        base = rng.standard_normal((4, 4))
        grads = []
        for _ in range(2):
            x = Tensor(base.copy(), requires_grad=True)
            h = T.softmax_rows(T.matmul(x, x))
            backward(T.tsum(T.mul(h, h)))
            grads.append(x.grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_grad_none_without_participation(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = Tensor(np.ones(3), requires_grad=True)
        backward(T.tsum(T.mul(x, x)))
        assert x.grad is not None and y.grad is None


class TestStructureOps:
    def test_concat_roundtrip_gradient(self):
        rng = np.random.default_rng(9)
        a = rand(rng, 2, 3)
        b = Tensor(rng.standard_normal((2, 2)))
        w = rng.standard_normal((2, 5))
        err = grad_check(lambda t: T.tsum(T.mul(T.concat([t, b], axis=1), Tensor(w))), a)
        assert err < 1e-6

    def test_gather_rows_scatter_gradient(self):
        table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
        out = T.gather_rows(table, [1, 1, 3])
        backward(T.tsum(out))
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        expected[3] = 1.0
        assert np.array_equal(table.grad, expected)

    def test_rows_cols_pick(self):
        x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
        assert T.rows(x, 1, 2).data.tolist() == [[4.0, 5.0, 6.0, 7.0]]
        assert T.cols(x, 0, 2).data.shape == (3, 2)
        p = T.pick(x, 2, 3)
        assert p.data == 11.0
        backward(p)
        assert x.grad[2, 3] == 1.0 and x.grad.sum() == 1.0

    def test_repeat_rows(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        out = T.repeat_rows(x, 3)
        assert out.data.shape == (3, 2)
        backward(T.tsum(out))
        assert x.grad.tolist() == [[3.0, 3.0]]

    def test_reshape_gradient(self):
        rng = np.random.default_rng(10)
        x = rand(rng, 2, 6)
        w = rng.standard_normal((3, 4))
        err = grad_check(lambda t: T.tsum(T.mul(T.reshape(t, (3, 4)), Tensor(w))), x)
        assert err < 1e-6


class TestGradCheck:
    def test_constant_gradient(self):
        rng = np.random.default_rng(11)
        x = rand(rng, 3, 2)
        assert grad_check(lambda t: T.tsum(t), x) < 1e-10

    def test_quadratic(self):
        rng = np.random.default_rng(12)
        x = rand(rng, 2, 3)
        assert grad_check(lambda t: T.tsum(T.mul(t, t)), x) < 1e-7

    def test_restores_state(self):
        x = Tensor(np.ones((2, 2)))
        before = x.data.copy()
        grad_check(lambda t: T.tsum(T.mul(t, t)), x)
        assert np.array_equal(x.data, before)
        assert x.requires_grad is False and x.grad is None


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_property_softmax_rows_stochastic(n, m, seed):
    rng = np.random.default_rng(seed)
    out = T.softmax_rows(Tensor(rng.uniform(-1e4, 1e4, size=(n, m))))
    assert np.all(out.data >= 0)
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_property_differentiable_ops_pass_grad_check(n, m, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((n, m)), requires_grad=True)
    w = Tensor(rng.standard_normal((n, m)))

    def f(t):
        return T.tsum(T.mul(T.softmax_rows(T.tanh(t)), w))

    assert grad_check(f, x) < 1e-4
