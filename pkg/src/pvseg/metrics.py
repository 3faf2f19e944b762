"""Segmentation quality metrics against synthetic ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synth import SceneClass

FAULT_CLASSES = (SceneClass.HOTSPOT, SceneClass.SNAIL_TRAIL)


class UndefinedMetricError(ValueError):
    """The requested metric is undefined (e.g. the truth class is absent)."""


@dataclass(frozen=True)
class FaultDetection:
    detected: bool
    score: float
    cluster_id: int


def iou(pred: np.ndarray, truth: np.ndarray) -> float:
    """Intersection over union of two boolean masks on the same grid.

    Both empty counts as perfect agreement (1.0); exactly one empty is 0.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    union = int(np.logical_or(pred, truth).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(pred, truth).sum()) / union


def best_cluster_iou(labels: np.ndarray, truth: np.ndarray, fault_class) -> tuple[int, float]:
    """Cluster whose pixel set best overlaps the fault class, with its IoU.

    Ties go to the lowest cluster id. Raises UndefinedMetricError when the
    fault class is absent from the truth (the metric is undefined then,
    not zero).
    """
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ValueError(f"labels shape {labels.shape} != truth shape {truth.shape}")
    target = truth == int(fault_class)
    if not target.any():
        raise UndefinedMetricError(f"class {fault_class!r} is absent from the ground truth")
    best_id, best_score = -1, -1.0
    for cluster in np.unique(labels):  # ascending, so strict > keeps the lowest id on ties
        score = iou(labels == cluster, target)
        if score > best_score:
            best_id, best_score = int(cluster), score
    return best_id, best_score


def detection_report(labels: np.ndarray, truth: np.ndarray, tau: float = 0.3):
    """Per-fault-class detection at IoU threshold tau.

    Returns {class_name: FaultDetection} for each fault class present in
    the truth; absent classes are omitted.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    report = {}
    for cls in FAULT_CLASSES:
        if not (np.asarray(truth) == int(cls)).any():
            continue
        cluster_id, score = best_cluster_iou(labels, truth, cls)
        report[cls.name.lower()] = FaultDetection(
            detected=score >= tau, score=score, cluster_id=cluster_id
        )
    return report
