"""Per-image training loop: forward, pseudo-label, loss, backward, update.

Runs until the iteration cap, until the label map collapses to at most
q_min distinct clusters, or until a numeric failure. Labels are detached:
no gradient flows through the argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .losses import LossBreakdown, total_loss
from .network import (
    NetworkParams,
    TrainConfig,
    assign_labels,
    backward,
    count_unique,
    forward_with_cache,
    init_params,
    sgd_momentum_step,
)
from .ops import NumericFailure


@dataclass
class SegmentationResult:
    final_labels: np.ndarray
    loss_history: list[LossBreakdown]
    iterations_run: int
    unique_clusters_final: int
    stop_reason: str  # "iteration_cap" | "cluster_floor" | "numeric_failure"


def train(image, config: TrainConfig) -> SegmentationResult:
    """Segment one [0, 1] grayscale image of shape (1, H, W).

    Per iteration: forward to the normalized response map, argmax pseudo
    labels, combined loss and its gradient, backprop, momentum update.
    The label map of the stopping iteration is returned; the loss history
    has exactly one entry per iteration run.
    """
    config.validate()
    params = init_params(config)
    history: list[LossBreakdown] = []
    labels = None
    stop = "iteration_cap"

    for _ in range(config.max_iterations):
        response, cache = forward_with_cache(params, image, config)
        labels = assign_labels(response)
        breakdown, grad_response = total_loss(response, labels, config.alpha, config.loss_reduction)
        history.append(breakdown)
        if not np.isfinite(breakdown.total):
            stop = "numeric_failure"
            break
        if count_unique(labels) <= config.q_min:
            stop = "cluster_floor"
            break
        grads = backward(params, cache, grad_response)
        try:
            params = sgd_momentum_step(params, grads, config)
        except NumericFailure:
            stop = "numeric_failure"
            break

    return SegmentationResult(
        final_labels=labels,
        loss_history=history,
        iterations_run=len(history),
        unique_clusters_final=count_unique(labels),
        stop_reason=stop,
    )


def alpha_sweep(image, config: TrainConfig, alphas) -> list[tuple[float, SegmentationResult]]:
    """Run train() once per alpha with an otherwise identical config.

    Every run re-initializes parameters and momentum from config.seed, so
    entries differ only in the continuity weight. Results come back in
    input order.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alphas must be a non-empty list")
    for a in alphas:
        if not (np.isfinite(a) and a >= 0):
            raise ValueError(f"every alpha must be finite and >= 0, got {a}")
    return [(a, train(image, replace(config, alpha=a))) for a in alphas]


def loss_history_csv(history) -> str:
    """Serialize a loss history as ``iteration,l_fs,l_sc,total`` CSV text."""
    lines = ["iteration,l_fs,l_sc,total"]
    for i, b in enumerate(history, start=1):
        lines.append(f"{i},{b.l_fs!r},{b.l_sc!r},{b.total!r}")
    return "\n".join(lines) + "\n"
