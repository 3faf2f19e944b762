"""Training losses over the normalized response map, with exact gradients.

Two terms: a feature-similarity term (softmax cross-entropy between the
response map and its own argmax pseudo labels) and a spatial-continuity
term (anisotropic L1 total variation over all adjacent pixel pairs).
With reduction "mean" both are normalized so the balance weight alpha
transfers across image sizes; "sum" gives raw sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import ShapeError


@dataclass(frozen=True)
class LossBreakdown:
    l_fs: float
    l_sc: float
    alpha: float
    total: float


def _check_reduction(reduction):
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")


def feature_similarity_loss(response, labels, reduction="mean"):
    """Cross-entropy between per-pixel softmax over channels and the label.

    Pulls pixels sharing a label toward identical responses. Returns
    (value, grad) where grad is the exact softmax-cross-entropy gradient
    wrt the response. Labels act as constants: no gradient flows to them.
    """
    _check_reduction(reduction)
    response = np.asarray(response, dtype=np.float64)
    labels = np.asarray(labels)
    if response.ndim != 3:
        raise ShapeError(f"response must be (q, H, W), got shape {response.shape}")
    if labels.shape != response.shape[1:]:
        raise ShapeError(
            f"labels shape {labels.shape} does not match response spatial shape {response.shape[1:]}"
        )
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    q = response.shape[0]
    if labels.size and (labels.min() < 0 or labels.max() >= q):
        raise ValueError(f"label ids must lie in [0, {q}), got range [{labels.min()}, {labels.max()}]")

    lab = labels[None, :, :]
    shifted = response - response.max(axis=0, keepdims=True)
    grad = np.exp(shifted)
    denom = grad.sum(axis=0, keepdims=True)
    picked = np.take_along_axis(shifted, lab, axis=0)[0]
    value = float((np.log(denom[0]) - picked).sum())
    grad /= denom  # now the softmax
    np.put_along_axis(grad, lab, np.take_along_axis(grad, lab, axis=0) - 1.0, axis=0)
    if reduction == "mean":
        n = labels.size
        value /= n
        grad /= n
    return value, grad


def spatial_continuity_loss(response, reduction="mean"):
    """L1 norm of horizontal and vertical response differences.

    Sums |r(c,y,x+1) - r(c,y,x)| and |r(c,y+1,x) - r(c,y,x)| over all
    adjacent pairs and channels; "mean" divides by q*H*W. The gradient is
    the sign subgradient, 0 at exact ties.
    """
    _check_reduction(reduction)
    response = np.asarray(response, dtype=np.float64)
    if response.ndim != 3:
        raise ShapeError(f"response must be (q, H, W), got shape {response.shape}")
    dh = response[:, :, 1:] - response[:, :, :-1]
    dv = response[:, 1:, :] - response[:, :-1, :]
    value = float(np.abs(dh).sum() + np.abs(dv).sum())
    grad = np.zeros_like(response)
    sh = np.sign(dh)
    sv = np.sign(dv)
    grad[:, :, 1:] += sh
    grad[:, :, :-1] -= sh
    grad[:, 1:, :] += sv
    grad[:, :-1, :] -= sv
    if reduction == "mean":
        denom = response.size
        value /= denom
        grad /= denom
    return value, grad


def total_loss(response, labels, alpha, reduction="mean"):
    """Weighted combination: similarity term plus alpha times continuity.

    Returns (LossBreakdown, grad) with grad = grad_fs + alpha * grad_sc.
    """
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    l_fs, grad_fs = feature_similarity_loss(response, labels, reduction)
    l_sc, grad_sc = spatial_continuity_loss(response, reduction)
    grad_fs += alpha * grad_sc
    return LossBreakdown(l_fs=l_fs, l_sc=l_sc, alpha=alpha, total=l_fs + alpha * l_sc), grad_fs
