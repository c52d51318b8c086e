"""Cross-scene object pose toolkit.

Non-neural core of an open-vocabulary pose pipeline: ground-truth match
generation from posed RGB-D views, masked feature matching, robust
rigid registration, symmetry-aware pose metrics, forward loss
diagnostics, and synthetic fixtures with exact oracles.
"""

from .errors import (
    BehindCamera,
    ConfigError,
    CrossposeError,
    DegenerateConfiguration,
    DimensionMismatch,
    EmptyMask,
    EmptyMatchSet,
    EmptyRender,
    NoConsensus,
    TooFewMatches,
    ZeroVector,
)
from .geometry import (
    CameraIntrinsics,
    ObjectModel,
    PointCloud,
    Pose,
    Projection,
    compose,
    diameter,
    inverse,
    project,
    relative_pose,
    unproject,
)
from .losses import (
    FeatureSet,
    LossParams,
    dice_loss,
    feature_loss,
    hardest_negative_indices,
    hardest_negative_loss,
    positive_loss,
    total_loss,
)
from .matcher import (
    MatchParams,
    MatchSet,
    downsample_mask,
    feature_distance,
    lift_matches,
    match_features,
)
from .matchgen import GtPair, accept_pair, generate_gt_matches
from .metrics import (
    AddResult,
    MetricParams,
    MetricReport,
    add_error,
    add_result,
    aggregate_reports,
    miou,
    mspd_error,
    mssd_error,
    pair_report,
    recall_average,
    vsd_error,
    vsd_error_set,
)
from .registration import (
    RegistrationParams,
    RegistrationResult,
    compatibility_scores,
    kabsch,
    register_ransac,
    register_spatial_consistency,
)
from .render import splat_depth
from .synth import (
    SynthScene,
    clutter_depth,
    cyclic_symmetries,
    make_correspondences,
    make_descriptor_field,
    make_model,
    make_pair,
    random_pose,
    random_rotation,
    render_scene,
    rotation_about_axis,
)

__version__ = "0.1.0"

__all__ = [
    "AddResult",
    "BehindCamera",
    "CameraIntrinsics",
    "ConfigError",
    "CrossposeError",
    "DegenerateConfiguration",
    "DimensionMismatch",
    "EmptyMask",
    "EmptyMatchSet",
    "EmptyRender",
    "FeatureSet",
    "GtPair",
    "LossParams",
    "MatchParams",
    "MatchSet",
    "MetricParams",
    "MetricReport",
    "NoConsensus",
    "ObjectModel",
    "PointCloud",
    "Pose",
    "Projection",
    "RegistrationParams",
    "RegistrationResult",
    "SynthScene",
    "TooFewMatches",
    "ZeroVector",
    "accept_pair",
    "add_error",
    "add_result",
    "aggregate_reports",
    "clutter_depth",
    "compatibility_scores",
    "compose",
    "cyclic_symmetries",
    "diameter",
    "dice_loss",
    "downsample_mask",
    "feature_distance",
    "feature_loss",
    "generate_gt_matches",
    "hardest_negative_indices",
    "hardest_negative_loss",
    "inverse",
    "kabsch",
    "lift_matches",
    "make_correspondences",
    "make_descriptor_field",
    "make_model",
    "make_pair",
    "match_features",
    "miou",
    "mspd_error",
    "mssd_error",
    "pair_report",
    "positive_loss",
    "project",
    "random_pose",
    "random_rotation",
    "recall_average",
    "register_ransac",
    "register_spatial_consistency",
    "relative_pose",
    "render_scene",
    "rotation_about_axis",
    "splat_depth",
    "total_loss",
    "unproject",
    "vsd_error",
    "vsd_error_set",
]
