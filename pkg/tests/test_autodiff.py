import threading

import numpy as np
import pytest
from conftest import naive_conv2d, naive_conv3d

from ridnet.sdk.autodiff import (
    Tensor,
    avg_pool2d,
    backward,
    conv2d,
    conv3d,
    enable_grad,
    gather,
    grad,
    grad_check,
    is_grad_enabled,
    mse,
    no_grad,
    relu,
    softmax,
    tape_graph,
)
from ridnet.sdk.autodiff.ops import pad_index
from ridnet.sdk.autodiff.tensor import tsum
from ridnet.sdk.errors import ShapeError
from ridnet.sdk.models.canonical_types import Padding


def leaf(values, name=None):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name=name)


class TestTensor:
    def test_data_is_read_only(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_integer_input_becomes_float(self):
        assert Tensor([1, 2, 3]).dtype == np.float64

    def test_item_requires_single_element(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()

    def test_broadcast_gradient_sums_back(self):
        a = leaf(np.ones((3, 4)))
        b = leaf(np.ones(4))
        ga, gb = grad(tsum(a * b), [a, b])
        np.testing.assert_array_equal(ga.data, np.ones((3, 4)))
        np.testing.assert_array_equal(gb.data, np.full(4, 3.0))


class TestBackward:
    def test_repeated_gather_accumulates(self):
        x = leaf([1.0, 2.0, 3.0])
        (g,) = grad(tsum(gather(x, np.array([0, 0, 1]))), [x])
        np.testing.assert_array_equal(g.data, [2.0, 1.0, 0.0])

    def test_unreached_input_gets_zeros(self):
        x = leaf([1.0, 2.0])
        y = leaf([3.0])
        gx, gy = grad(tsum(x * x), [x, y])
        np.testing.assert_array_equal(gx.data, [2.0, 4.0])
        np.testing.assert_array_equal(gy.data, [0.0])

    def test_non_scalar_loss_is_rejected(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ShapeError):
            grad(x * 2.0, [x])

    def test_backward_reports_named_leaves(self):
        w = leaf([2.0], name="w")
        b = leaf([1.0], name="b")
        grads = backward(tsum(w * 3.0 + b))
        assert set(grads) == {"w", "b"}
        np.testing.assert_array_equal(grads["w"].data, [3.0])

    def test_no_grad_records_nothing(self):
        x = leaf([1.0])
        with no_grad():
            y = x * 2.0
            assert not is_grad_enabled()
        assert y.node is None
        assert is_grad_enabled()

    def test_tape_graph_is_a_dag(self):
        x = leaf([1.0, 2.0])
        y = tsum((x * x).exp())
        graph = tape_graph(y)
        assert graph.number_of_nodes() == 3

    def test_second_order(self):
        x = leaf([1.5, -2.0])
        (g,) = grad(tsum(x**3), [x], create_graph=True)
        (h,) = grad(tsum(g), [x])
        np.testing.assert_allclose(h.data, 6.0 * x.data, rtol=1e-12)

    def test_grad_mode_is_per_thread(self):
        seen = {}

        def worker():
            seen["worker"] = is_grad_enabled()

        with no_grad():
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()
        assert seen["worker"] is True


class TestConvolution:
    def test_reflect_index_mirrors_without_edge_repeat(self):
        np.testing.assert_array_equal(pad_index(5, 2, Padding.REFLECT), [2, 1, 0, 1, 2, 3, 4, 3, 2])

    def test_zero_index_marks_outside(self):
        np.testing.assert_array_equal(pad_index(3, 1, Padding.ZERO), [-1, 0, 1, 2, -1])

    @pytest.mark.parametrize("mode", ["reflect", "zero"])
    def test_conv2d_matches_loop_reference(self, rng, mode):
        x = rng.normal(size=(2, 6, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = conv2d(Tensor(x), Tensor(k), Tensor(b), Padding(mode))
        np.testing.assert_allclose(out.data, naive_conv2d(x, k, b, mode), atol=1e-12)

    def test_strided_conv_takes_every_other_output(self, rng):
        x = rng.normal(size=(1, 8, 8))
        k = rng.normal(size=(2, 1, 3, 3))
        full = conv2d(Tensor(x), Tensor(k), None, Padding.ZERO).data
        strided = conv2d(Tensor(x), Tensor(k), None, Padding.ZERO, stride=2).data
        np.testing.assert_allclose(strided, full[:, ::2, ::2], atol=1e-12)

    def test_conv3d_identity_kernel(self, rng):
        x = rng.normal(size=(1, 3, 4, 4))
        k = np.zeros((1, 1, 3, 3, 3))
        k[0, 0, 1, 1, 1] = 1.0
        out = conv3d(Tensor(x), Tensor(k), None, Padding.REFLECT)
        np.testing.assert_allclose(out.data, x, atol=1e-15)

    @pytest.mark.parametrize("mode", ["reflect", "zero"])
    def test_conv3d_matches_loop_reference(self, rng, mode):
        x = rng.normal(size=(2, 3, 6, 5))
        k = rng.normal(size=(3, 2, 3, 3, 3))
        b = rng.normal(size=3)
        out = conv3d(Tensor(x), Tensor(k), Tensor(b), Padding(mode))
        np.testing.assert_allclose(out.data, naive_conv3d(x, k, b, mode), atol=1e-12)

    def test_channel_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match="input channels"):
            conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_reflect_needs_extent(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


class TestCompositeOps:
    def test_masked_softmax(self, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        mask = np.array([[1, 1, 0, 1], [1, 1, 1, 1], [0, 0, 1, 0]], dtype=bool)
        w = softmax(x, axis=-1, mask=mask).data
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w[~mask] == 0.0)
        assert w[2, 2] == pytest.approx(1.0)

    def test_softmax_is_shift_invariant(self, rng):
        x = rng.normal(size=(5,))
        np.testing.assert_allclose(softmax(Tensor(x)).data, softmax(Tensor(x + 1000.0)).data, atol=1e-12)

    def test_avg_pool_drops_trailing_rows(self):
        x = Tensor(np.arange(15, dtype=np.float64).reshape(1, 3, 5))
        out = avg_pool2d(x, 2)
        assert out.shape == (1, 1, 2)
        np.testing.assert_allclose(out.data, [[[3.0, 5.0]]])

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


class TestGradCheck:
    def test_smooth_function_passes(self, rng):
        x = leaf(rng.normal(size=(2, 5, 5)))
        k = leaf(rng.normal(size=(2, 2, 3, 3)))
        result = grad_check(lambda x, k: tsum(conv2d(x, k) * conv2d(x, k)), [x, k], floor=1e-6)
        assert result.passed(1e-5)
        assert result.checked == x.size + k.size

    def test_wrong_gradient_is_caught(self):
        x = leaf([0.7, -0.3])

        def f(x):
            # stop-gradient on one factor halves the analytic derivative
            return tsum(x * x.detach())

        assert not grad_check(f, [x]).passed(1e-5)

    def test_relu_kink_uses_one_sided_difference(self):
        x = leaf([5e-5, 0.8])
        plain = grad_check(lambda x: tsum(relu(x)), [x], epsilon=1e-4)
        assert not plain.passed(1e-5)
        result = grad_check(lambda x: tsum(relu(x)), [x], epsilon=1e-4, kink_tolerance=1e-5)
        assert result.passed(1e-5)
        assert result.kinks == 1

    def test_inputs_must_be_leaves(self):
        x = leaf([1.0])
        with pytest.raises(ValueError):
            grad_check(lambda y: tsum(y), [x * 2.0])

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            grad_check(lambda x: tsum(x), [leaf([1.0])], epsilon=0.0)

    def test_second_order_through_penalty(self, rng):
        w = leaf(rng.normal(size=(3,)))
        x = rng.normal(size=(3,))

        def f(w):
            with enable_grad():
                inner = Tensor(x, requires_grad=True)
                (g,) = grad(tsum((inner * w).exp()), [inner], create_graph=True)
                return tsum(g * g)

        assert grad_check(f, [w], floor=1e-6).passed(1e-5)
