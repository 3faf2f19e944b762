"""Unsupervised feature-clustering segmentation of thermal PV panel images.

A small CNN assigns a cluster id to every pixel of a grayscale thermal
image; the network is trained per image against its own argmax pseudo
labels with a feature-similarity loss plus a spatial-continuity (total
variation) penalty. All gradients are hand derived and checked against
finite differences.
"""

from .ops import (
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
from .network import (
    NetworkParams,
    ParamSet,
    TrainConfig,
    assign_labels,
    backward,
    count_unique,
    forward,
    forward_with_cache,
    init_params,
    sgd_momentum_step,
)
from .losses import (
    LossBreakdown,
    feature_similarity_loss,
    spatial_continuity_loss,
    total_loss,
)
from .trainer import SegmentationResult, alpha_sweep, loss_history_csv, train
from .imaging import (
    ImageFormatError,
    colorize,
    histogram,
    labels_to_gray,
    load_grayscale,
    palette,
    read_pgm,
    save_pgm,
    save_png,
    write_pgm,
)
from .synth import (
    Hotspot,
    SceneClass,
    SceneSpec,
    SnailTrail,
    format_scene_spec,
    generate_scene,
    parse_scene_spec,
    preset_names,
    preset_scene,
)
from .metrics import (
    FaultDetection,
    UndefinedMetricError,
    best_cluster_iou,
    detection_report,
    iou,
)

__version__ = "0.1.0"
