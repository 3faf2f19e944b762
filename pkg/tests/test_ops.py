import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvseg.ops import (
    NumericFailure,
    ShapeError,
    channelnorm_backward,
    channelnorm_forward,
    conv2d_backward,
    conv2d_forward,
    grad_check,
    relu_backward,
    relu_forward,
)


def random_tensor(seed, shape, scale=1.0):
    return np.random.default_rng(seed).standard_normal(shape) * scale


def identity_kernel(channels, k=3):
    w = np.zeros((channels, channels, k, k))
    for c in range(channels):
        w[c, c, k // 2, k // 2] = 1.0
    return w


small_shapes = st.tuples(
    st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)
)


# ---------------------------------------------------------------------------
# convolution forward


class TestConvForward:
    def test_identity_kernel_single_pixel(self):
        x = np.array([[[2.0]]])
        out = conv2d_forward(x, identity_kernel(1), np.zeros(1))
        assert np.array_equal(out, x)

    def test_zero_input_yields_bias(self):
        x = np.zeros((2, 4, 5))
        w = random_tensor(0, (3, 2, 3, 3))
        b = np.array([1.5, -2.0, 0.25])
        out = conv2d_forward(x, w, b)
        assert out.shape == (3, 4, 5)
        for c in range(3):
            assert np.all(out[c] == b[c])

    def test_all_ones_kernel_sums_padded_window(self):
        # hand evaluation: every 3x3 window over a zero-padded 2x2 image
        # covers all four pixels, so each output element is 1+2+3+4 = 10
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = conv2d_forward(x, np.ones((1, 1, 3, 3)), np.zeros(1))
        assert np.allclose(out, 10.0)

    def test_1x1_is_per_pixel_linear_map(self):
        x = random_tensor(1, (3, 4, 4))
        w = random_tensor(2, (2, 3, 1, 1))
        b = random_tensor(3, (2,))
        out = conv2d_forward(x, w, b)
        expected = np.einsum("oi,ihw->ohw", w[:, :, 0, 0], x) + b[:, None, None]
        assert np.allclose(out, expected)

    def test_rejects_bad_kernel_size(self):
        with pytest.raises(ShapeError, match="kernel size"):
            conv2d_forward(np.zeros((1, 4, 4)), np.zeros((1, 1, 2, 2)), np.zeros(1))

    def test_rejects_channel_mismatch(self):
        with pytest.raises(ShapeError, match="input channels"):
            conv2d_forward(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_rejects_bad_bias(self):
        with pytest.raises(ShapeError, match="bias"):
            conv2d_forward(np.zeros((1, 4, 4)), np.zeros((2, 1, 3, 3)), np.zeros(3))

    @given(st.integers(0, 1000), small_shapes)
    @settings(max_examples=40, deadline=None)
    def test_identity_kernel_is_identity_map(self, seed, shape):
        x = random_tensor(seed, shape)
        out = conv2d_forward(x, identity_kernel(shape[0]), np.zeros(shape[0]))
        assert np.allclose(out, x, atol=0, rtol=0)

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 5, 4))
        y = rng.standard_normal((2, 5, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        a, b = rng.standard_normal(2)
        zero = np.zeros(3)
        lhs = conv2d_forward(a * x + b * y, w, zero)
        rhs = a * conv2d_forward(x, w, zero) + b * conv2d_forward(y, w, zero)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_deterministic(self):
        x = random_tensor(4, (2, 6, 6))
        w = random_tensor(5, (3, 2, 3, 3))
        b = random_tensor(6, (3,))
        first = conv2d_forward(x, w, b)
        second = conv2d_forward(x, w, b)
        assert np.array_equal(first, second)


# ---------------------------------------------------------------------------
# convolution backward


def conv_loss_fn(projection):
    """Loss sum(conv(x, w, b) * R): analytic grads come from conv2d_backward
    with grad_out = R, which the finite differences then cross-check."""

    def fn(params):
        x, w, b = params
        out = conv2d_forward(x, w, b)
        gx, gw, gb = conv2d_backward(projection, x, w)
        return float((out * projection).sum()), [gx, gw, gb]

    return fn


class TestConvBackward:
    def test_zero_grad_out_gives_zero_grads(self):
        x = random_tensor(0, (2, 4, 4))
        w = random_tensor(1, (3, 2, 3, 3))
        gx, gw, gb = conv2d_backward(np.zeros((3, 4, 4)), x, w)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_identity_kernel_jacobian(self):
        g = np.array([[[1.0]]])
        gx, _, _ = conv2d_backward(g, np.array([[[2.0]]]), identity_kernel(1))
        assert np.array_equal(gx, g)

    def test_matches_finite_differences_3x3(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 4, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        projection = rng.standard_normal((3, 4, 4))
        err = grad_check(conv_loss_fn(projection), [x, w, b], probe_eps=1e-5)
        assert err < 1e-6

    def test_matches_finite_differences_1x1(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((3, 4, 5))
        w = rng.standard_normal((2, 3, 1, 1))
        b = rng.standard_normal(2)
        projection = rng.standard_normal((2, 4, 5))
        err = grad_check(conv_loss_fn(projection), [x, w, b], probe_eps=1e-5)
        assert err < 1e-6

    def test_rejects_grad_shape_mismatch(self):
        x = random_tensor(0, (2, 4, 4))
        w = random_tensor(1, (3, 2, 3, 3))
        with pytest.raises(ShapeError):
            conv2d_backward(np.zeros((2, 4, 4)), x, w)
        with pytest.raises(ShapeError):
            conv2d_backward(np.zeros((3, 5, 4)), x, w)


# ---------------------------------------------------------------------------
# ReLU


class TestReLU:
    def test_forward_values(self):
        out = relu_forward(np.array([[[-1.0, 0.0, 2.0]]]))
        assert np.array_equal(out, [[[0.0, 0.0, 2.0]]])

    def test_all_positive_is_identity(self):
        x = np.abs(random_tensor(0, (2, 3, 3))) + 0.1
        assert np.array_equal(relu_forward(x), x)

    def test_backward_zeroes_non_positive(self):
        grad = relu_backward(np.array([5.0, 5.0]), np.array([-1.0, 2.0]))
        assert np.array_equal(grad, [0.0, 5.0])

    def test_backward_shape_mismatch(self):
        with pytest.raises(ShapeError):
            relu_backward(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# channel normalization


class TestChannelNorm:
    def test_constant_channel_maps_near_zero(self):
        x = np.full((1, 2, 2), 5.0)
        out, _ = channelnorm_forward(x, eps=1e-5)
        assert np.abs(out).max() < 1e-2

    def test_two_pixel_hand_value(self):
        # channel [0, 2]: mean 1, population variance 1, so output is [-1, 1]
        x = np.array([[[0.0, 2.0]]])
        out, _ = channelnorm_forward(x, eps=1e-12)
        assert np.allclose(out, [[[-1.0, 1.0]]], atol=1e-9)

    @given(st.integers(0, 1000), small_shapes)
    @settings(max_examples=40, deadline=None)
    def test_zero_mean_unit_variance(self, seed, shape):
        eps = 1e-5
        x = random_tensor(seed, shape, scale=3.0)
        out, _ = channelnorm_forward(x, eps)
        n = shape[1] * shape[2]
        for c in range(shape[0]):
            var_in = x[c].var()
            if var_in <= 1e3 * eps:
                continue
            assert abs(out[c].mean()) < 1e-9
            assert abs(out[c].var() - 1.0) < 1e-6

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            channelnorm_forward(np.zeros((1, 2, 2)), eps=0.0)

    def test_backward_zero_grad(self):
        _, cache = channelnorm_forward(random_tensor(0, (2, 3, 3)))
        grad = channelnorm_backward(np.zeros((2, 3, 3)), cache)
        assert not grad.any()

    def test_backward_constant_grad_vanishes(self):
        # normalization removes the mean direction, so a constant upstream
        # gradient has no effect on the input
        _, cache = channelnorm_forward(random_tensor(1, (2, 4, 4)))
        grad = channelnorm_backward(np.ones((2, 4, 4)), cache)
        assert np.abs(grad).max() < 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((3, 4, 5))
        projection = rng.standard_normal((3, 4, 5))

        def fn(params):
            out, cache = channelnorm_forward(params[0], eps=1e-5)
            return float((out * projection).sum()), [channelnorm_backward(projection, cache)]

        err = grad_check(fn, [x], probe_eps=1e-5)
        assert err < 1e-6


# ---------------------------------------------------------------------------
# gradient checker


class TestGradCheck:
    def test_linear_function_is_exact(self):
        def fn(params):
            return float(3.0 * params[0].sum()), [np.full_like(params[0], 3.0)]

        err = grad_check(fn, [np.array([2.0])], probe_eps=1e-5)
        assert err < 1e-10

    def test_detects_sign_flipped_backward(self):
        def fn(params):
            return float((params[0] ** 2).sum()), [-2.0 * params[0]]

        err = grad_check(fn, [np.array([1.0, -0.5])], probe_eps=1e-5)
        assert err > 0.1

    def test_rejects_probe_eps_out_of_range(self):
        fn = lambda params: (float(params[0].sum()), [np.ones_like(params[0])])
        with pytest.raises(ValueError):
            grad_check(fn, [np.ones(2)], probe_eps=1e-2)
        with pytest.raises(ValueError):
            grad_check(fn, [np.ones(2)], probe_eps=1e-8)

    def test_non_finite_loss_is_a_failure(self):
        def fn(params):
            return float("nan"), [np.zeros_like(params[0])]

        with pytest.raises(NumericFailure):
            grad_check(fn, [np.ones(2)], probe_eps=1e-5)

    def test_restores_parameters(self):
        w = np.array([1.0, 2.0, 3.0])
        original = w.copy()

        def fn(params):
            return float(params[0].sum()), [np.ones_like(params[0])]

        grad_check(fn, [w], probe_eps=1e-4)
        assert np.array_equal(w, original)


# ---------------------------------------------------------------------------
# cross-cutting properties


@given(st.integers(0, 500), small_shapes)
@settings(max_examples=30, deadline=None)
def test_ops_preserve_finiteness(seed, shape):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) * 10.0
    w = rng.standard_normal((2, shape[0], 3, 3))
    b = rng.standard_normal(2)
    out = conv2d_forward(x, w, b)
    assert np.isfinite(out).all()
    gx, gw, gb = conv2d_backward(rng.standard_normal(out.shape), x, w)
    assert np.isfinite(gx).all() and np.isfinite(gw).all() and np.isfinite(gb).all()
    normed, cache = channelnorm_forward(relu_forward(out))
    assert np.isfinite(normed).all()
    assert np.isfinite(channelnorm_backward(rng.standard_normal(out.shape), cache)).all()
