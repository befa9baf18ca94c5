"""Oriented-box kernels for anchor-free proposal generation and evaluation."""

from .align import KERNEL_OFFSETS, align_forward, bilinear_sample, offset_field, sampling_positions
from .assignment import (
    IGNORE,
    LEVELS,
    NEGATIVE,
    POSITIVE,
    AssignerConfig,
    AssignmentResult,
    FeatureGridSpec,
    UnassignableSizeError,
    assign_by_iou,
    assign_level,
    assign_points,
    grid_points,
)
from .encoding import (
    DistanceVector,
    PointOutsideBoxError,
    RefineDeltas,
    decode_box,
    decode_refine,
    encode_distances,
    encode_refine,
    wrap_half_pi,
)
from .evalio import (
    AnnotationParseError,
    DetectionRecord,
    EvalResult,
    GroundTruthRecord,
    Histogram,
    average_precision,
    evaluate_detections,
    iou_histogram,
    mean_ap,
    parse_dota_annotation,
    recall,
    target_histogram,
)
from .geometry import (
    InvalidBoxError,
    OrientedBox,
    Point,
    canonicalize,
    contains,
    corners,
    from_local,
    iou_matrix,
    iou_oracle_mc,
    iou_pairwise,
    min_area_enclosing_box,
    rotated_iou,
    to_local,
)
from .losses import ClmLevelBatch, LossBreakdown, LossConfig, clm_loss, focal_loss, smooth_l1
from .proposals import (
    LevelPredictions,
    PredictionMaps,
    Proposal,
    ProposalConfig,
    RefinementMaps,
    Scene,
    SceneConfig,
    fuse_scores,
    generate_proposals,
    rotated_nms,
    simulate_scene,
)

__version__ = "0.1.0"
