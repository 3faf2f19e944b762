"""Differentiable tensor primitives with hand-derived backward passes.

Tensors are double-precision numpy arrays laid out channels x height x
width. Every operation is a pure function and deterministic: identical
inputs produce bit-identical outputs. "Convolution" means zero-padded
cross-correlation (no kernel flip), kernel size 1 or 3, output spatial
size equal to the input's.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np


class ShapeError(ValueError):
    """An operand's shape violates the operation contract."""


class NumericFailure(ArithmeticError):
    """A computation produced or encountered non-finite values."""


# ---------------------------------------------------------------------------
# convolution


def _check_conv_shapes(x, weights, bias):
    if x.ndim != 3:
        raise ShapeError(f"input must be (channels, height, width), got shape {x.shape}")
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ShapeError(f"weights must be (out_ch, in_ch, k, k), got shape {weights.shape}")
    k = weights.shape[2]
    if k not in (1, 3):
        raise ShapeError(f"kernel size must be 1 or 3, got {k}")
    if weights.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weights expect {weights.shape[1]} input channels, input has {x.shape[0]}"
        )
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias must have shape ({weights.shape[0]},), got {bias.shape}")
    return k


def _im2col3(x):
    """Unfold 3x3 zero-padded patches into a (9*C, H*W) matrix, tap-major."""
    c, h, w = x.shape
    pad = np.zeros((c, h + 2, w + 2))
    pad[:, 1:-1, 1:-1] = x
    cols = np.empty((9 * c, h * w))
    k = 0
    for di in range(3):
        for dj in range(3):
            np.copyto(cols[k * c:(k + 1) * c].reshape(c, h, w), pad[:, di:di + h, dj:dj + w])
            k += 1
    return cols


def _weights_matrix(weights):
    """(out_ch, in_ch, 3, 3) -> (out_ch, 9*in_ch) matching _im2col3 row order."""
    c_out, c_in = weights.shape[0], weights.shape[1]
    return np.ascontiguousarray(weights.transpose(0, 2, 3, 1).reshape(c_out, 9 * c_in))


def conv2d_forward(x, weights, bias):
    """Zero-padded cross-correlation plus per-channel bias.

    x: (in_ch, H, W); weights: (out_ch, in_ch, k, k) with k in {1, 3};
    bias: (out_ch,). Returns (out_ch, H, W).
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    k = _check_conv_shapes(x, weights, bias)
    _, h, w = x.shape
    c_out = weights.shape[0]
    if k == 1:
        out = weights.reshape(c_out, -1) @ x.reshape(x.shape[0], h * w)
    else:
        out = _weights_matrix(weights) @ _im2col3(x)
    out += bias[:, None]
    return out.reshape(c_out, h, w)


def conv2d_backward(grad_out, x, weights, *, cols=None, need_input_grad=True):
    """Gradients of conv2d_forward with respect to input, weights and bias.

    grad_out must have the forward output's shape. ``cols`` may pass a
    precomputed _im2col3(x) to avoid rebuilding it; when given, ``x`` is
    only used for shape checks and may be None.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        k = _check_conv_shapes(x, weights, None)
    elif cols is None:
        raise ShapeError("either the cached input or its im2col matrix is required")
    else:
        k = weights.shape[2]
    c_out, c_in = weights.shape[0], weights.shape[1]
    if grad_out.ndim != 3 or grad_out.shape[0] != c_out:
        raise ShapeError(
            f"grad_out must be ({c_out}, H, W) to match the forward output, got {grad_out.shape}"
        )
    if x is not None and grad_out.shape[1:] != x.shape[1:]:
        raise ShapeError(
            f"grad_out spatial size {grad_out.shape[1:]} does not match input {x.shape[1:]}"
        )
    _, h, w = grad_out.shape
    gf = grad_out.reshape(c_out, h * w)
    grad_bias = gf.sum(axis=1)

    if k == 1:
        xf = x.reshape(c_in, h * w) if cols is None else cols
        grad_weights = (gf @ xf.T).reshape(c_out, c_in, 1, 1)
        grad_input = None
        if need_input_grad:
            grad_input = (weights.reshape(c_out, c_in).T @ gf).reshape(c_in, h, w)
        return grad_input, grad_weights, grad_bias

    if cols is None:
        cols = _im2col3(x)
    gw = gf @ cols.T  # (out_ch, 9*in_ch), tap-major like _weights_matrix
    grad_weights = np.ascontiguousarray(gw.reshape(c_out, 3, 3, c_in).transpose(0, 3, 1, 2))
    grad_input = None
    if need_input_grad:
        gpad = np.zeros((c_in, h + 2, w + 2))
        buf = np.empty((c_in, h * w))
        for di in range(3):
            for dj in range(3):
                np.matmul(np.ascontiguousarray(weights[:, :, di, dj].T), gf, out=buf)
                gpad[:, di:di + h, dj:dj + w] += buf.reshape(c_in, h, w)
        grad_input = gpad[:, 1:-1, 1:-1].copy()
    return grad_input, grad_weights, grad_bias


# ---------------------------------------------------------------------------
# ReLU


def relu_forward(x):
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out, x):
    """Zero the gradient wherever the forward input was <= 0."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != cached input shape {x.shape}")
    return grad_out * (x > 0.0)


# ---------------------------------------------------------------------------
# per-channel normalization


class ChannelNormCache(NamedTuple):
    normalized: np.ndarray  # the forward output
    inv_std: np.ndarray     # per-channel 1/sqrt(var + eps)


def channelnorm_forward(x, eps=1e-5):
    """Normalize each channel to zero mean, unit variance over its pixels.

    Population (biased) variance; no learnable scale or shift. ``eps``
    guards channels with vanishing variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"input must be (channels, height, width), got shape {x.shape}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    n = x.shape[1] * x.shape[2]
    mu = x.mean(axis=(1, 2))
    centered = x - mu[:, None, None]
    var = np.einsum("chw,chw->c", centered, centered) / n
    inv_std = 1.0 / np.sqrt(var + eps)
    out = centered * inv_std[:, None, None]
    return out, ChannelNormCache(out, inv_std)


def channelnorm_backward(grad_out, cache):
    """Exact Jacobian-transpose product of channelnorm_forward.

    With y = (x - mean) * inv_std and per-channel means over N pixels:
    dx = inv_std * (g - mean(g) - y * mean(g * y)).
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    y, inv_std = cache
    if grad_out.shape != y.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward shape {y.shape}")
    n = y.shape[1] * y.shape[2]
    g_mean = grad_out.mean(axis=(1, 2))
    gy_mean = np.einsum("chw,chw->c", grad_out, y) / n
    return (grad_out - g_mean[:, None, None] - y * gy_mean[:, None, None]) * inv_std[:, None, None]


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def grad_check(loss_fn: Callable, params: Sequence[np.ndarray], probe_eps: float = 1e-5) -> float:
    """Compare analytic gradients to central finite differences.

    ``loss_fn(params) -> (loss, grads)`` evaluates the scalar loss and one
    gradient array per parameter array. Parameter arrays are perturbed in
    place and restored. Returns the maximum over all parameter elements of

        |analytic - numeric| / max(1, |analytic| + |numeric|)

    Raises NumericFailure if any probed loss is non-finite.
    """
    if not 1e-7 <= probe_eps <= 1e-3:
        raise ValueError(f"probe_eps must lie in [1e-7, 1e-3], got {probe_eps}")
    loss0, grads = loss_fn(params)
    if not np.isfinite(loss0):
        raise NumericFailure("loss is not finite at the probe point")
    if len(grads) != len(params):
        raise ShapeError(f"loss_fn returned {len(grads)} gradients for {len(params)} parameters")

    worst = 0.0
    for arr, grad in zip(params, grads):
        if grad.shape != arr.shape:
            raise ShapeError(f"gradient shape {grad.shape} != parameter shape {arr.shape}")
        flat = arr.reshape(-1)
        gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + probe_eps
            plus, _ = loss_fn(params)
            flat[i] = orig - probe_eps
            minus, _ = loss_fn(params)
            flat[i] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NumericFailure("loss is not finite at a perturbed probe point")
            numeric = (plus - minus) / (2.0 * probe_eps)
            analytic = gflat[i]
            err = abs(analytic - numeric) / max(1.0, abs(analytic) + abs(numeric))
            if err > worst:
                worst = err
    return worst
