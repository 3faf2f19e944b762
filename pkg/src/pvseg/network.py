"""The fixed per-image clustering network.

Three convolution modules: two 3x3 feature extractors (ReLU + channel
normalization each) and a 1x1 per-pixel linear classifier, followed by a
final channel normalization. The argmax over the normalized response
channels assigns one cluster id per pixel. Parameters are trained with
classic SGD-with-momentum against the losses in :mod:`pvseg.losses`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ops import (
    NumericFailure,
    ShapeError,
    _im2col3,
    channelnorm_backward,
    channelnorm_forward,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)

PARAM_FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "clf_w", "clf_b")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a per-image training run."""

    learning_rate: float = 0.1
    momentum: float = 0.9
    max_iterations: int = 200
    alpha: float = 5.0
    feature_channels: int = 64
    q_max: int = 18
    q_min: int = 4
    seed: int = 0
    eps: float = 1e-5
    loss_reduction: str = "mean"

    def validate(self) -> None:
        if not 1 <= self.q_min <= self.q_max:
            raise ValueError(f"need 1 <= q_min <= q_max, got q_min={self.q_min} q_max={self.q_max}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.feature_channels < 1:
            raise ValueError(f"feature_channels must be >= 1, got {self.feature_channels}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError(f"loss_reduction must be 'mean' or 'sum', got {self.loss_reduction!r}")


@dataclass
class ParamSet:
    """One array per learnable tensor: weights and bias of each layer."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    clf_w: np.ndarray
    clf_b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_FIELDS]

    def copy(self) -> "ParamSet":
        return ParamSet(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros_like(cls, other: "ParamSet") -> "ParamSet":
        return cls(*(np.zeros_like(a) for a in other.arrays()))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def congruent_with(self, other: "ParamSet") -> bool:
        return all(a.shape == b.shape for a, b in zip(self.arrays(), other.arrays()))


@dataclass
class NetworkParams:
    """Learnable tensors plus shape-congruent momentum buffers."""

    weights: ParamSet
    velocity: ParamSet


def init_params(config: TrainConfig) -> NetworkParams:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, zero momentum.

    Fully determined by config.seed.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    m, q = config.feature_channels, config.q_max
    weights = ParamSet(
        conv1_w=rng.normal(0.0, math.sqrt(2.0 / 9.0), size=(m, 1, 3, 3)),
        conv1_b=np.zeros(m),
        conv2_w=rng.normal(0.0, math.sqrt(2.0 / (9.0 * m)), size=(m, m, 3, 3)),
        conv2_b=np.zeros(m),
        clf_w=rng.normal(0.0, math.sqrt(2.0 / m), size=(q, m, 1, 1)),
        clf_b=np.zeros(q),
    )
    return NetworkParams(weights=weights, velocity=ParamSet.zeros_like(weights))


@dataclass
class ForwardCache:
    """Intermediate values needed by backward(); cols are im2col matrices."""

    image: np.ndarray
    cols1: np.ndarray
    z1: np.ndarray
    nc1: tuple
    cols2: np.ndarray
    z2: np.ndarray
    nc2: tuple
    z3: np.ndarray
    nc3: tuple


def _check_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 1:
        raise ShapeError(f"image must be (1, H, W), got shape {image.shape}")
    if image.shape[1] < 1 or image.shape[2] < 1:
        raise ShapeError(f"image must have at least one pixel, got shape {image.shape}")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    lo, hi = image.min(), image.max()
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"image values must lie in [0, 1], got range [{lo}, {hi}]")
    return image


def forward_with_cache(params: NetworkParams, image, config: TrainConfig):
    """Run the network and keep everything backward() needs.

    Returns (response, cache); response has shape (q_max, H, W) and each
    channel is normalized to zero mean, unit variance.
    """
    image = _check_image(image)
    w = params.weights
    eps = config.eps

    cols1 = _im2col3(image)
    z1 = _conv3_from_cols(cols1, w.conv1_w, w.conv1_b, image.shape[1:])
    n1, nc1 = channelnorm_forward(relu_forward(z1), eps)

    cols2 = _im2col3(n1)
    z2 = _conv3_from_cols(cols2, w.conv2_w, w.conv2_b, image.shape[1:])
    n2, nc2 = channelnorm_forward(relu_forward(z2), eps)

    z3 = conv2d_forward(n2, w.clf_w, w.clf_b)
    response, nc3 = channelnorm_forward(z3, eps)

    return response, ForwardCache(image, cols1, z1, nc1, cols2, z2, nc2, z3, nc3)


def _conv3_from_cols(cols, weights, bias, hw):
    from .ops import _weights_matrix

    h, w = hw
    out = _weights_matrix(weights) @ cols
    out += bias[:, None]
    return out.reshape(weights.shape[0], h, w)


def forward(params: NetworkParams, image, config: TrainConfig) -> np.ndarray:
    """Normalized (q_max, H, W) response map for a [0, 1] grayscale image."""
    response, _ = forward_with_cache(params, image, config)
    return response


def backward(params: NetworkParams, cache: ForwardCache, grad_response) -> ParamSet:
    """Gradients of a scalar loss wrt all parameters, given its gradient
    wrt the response map."""
    w = params.weights
    g = channelnorm_backward(grad_response, cache.nc3)
    g, gw_clf, gb_clf = conv2d_backward(g, cache.nc2.normalized, w.clf_w)
    g = channelnorm_backward(g, cache.nc2)
    g = relu_backward(g, cache.z2)
    g, gw2, gb2 = conv2d_backward(g, None, w.conv2_w, cols=cache.cols2)
    g = channelnorm_backward(g, cache.nc1)
    g = relu_backward(g, cache.z1)
    _, gw1, gb1 = conv2d_backward(g, None, w.conv1_w, cols=cache.cols1, need_input_grad=False)
    return ParamSet(gw1, gb1, gw2, gb2, gw_clf, gb_clf)


def assign_labels(response) -> np.ndarray:
    """Per-pixel index of the maximum response channel; ties take the
    lowest channel index."""
    response = np.asarray(response)
    if response.ndim != 3:
        raise ShapeError(f"response must be (q, H, W), got shape {response.shape}")
    return np.argmax(response, axis=0)


def count_unique(labels) -> int:
    """Number of distinct cluster ids present in a label map."""
    return int(np.unique(np.asarray(labels)).size)


def sgd_momentum_step(params: NetworkParams, grads: ParamSet, config: TrainConfig) -> NetworkParams:
    """Classic momentum update: v <- momentum*v + g; w <- w - lr*v.

    Buffers persist across iterations via the returned NetworkParams.
    Raises NumericFailure on non-finite gradients.
    """
    if not grads.congruent_with(params.weights):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not grads.all_finite():
        raise NumericFailure("non-finite gradient; aborting the update")
    new_w, new_v = [], []
    for wa, va, ga in zip(params.weights.arrays(), params.velocity.arrays(), grads.arrays()):
        v = config.momentum * va + ga
        new_v.append(v)
        new_w.append(wa - config.learning_rate * v)
    return NetworkParams(weights=ParamSet(*new_w), velocity=ParamSet(*new_v))
