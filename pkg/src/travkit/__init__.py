"""travkit: stereo terrain traversability analysis.

Converts rectified stereo pairs into organized point clouds, detects all
terrain surfaces as normal-agreeing superpixel segments, and classifies
each against vehicle kinematic limits into five classes: traversable,
semi-traversable, non-traversable, unknown and undecided.
"""

from .config import (
    CameraIntrinsics,
    Config,
    ConfigError,
    MatcherParams,
    PipelineParams,
    TraversabilityParams,
    load_config,
)
from .normals import (
    IntegralImage,
    NormalMap,
    build_integral,
    estimate_normals,
    estimate_normals_covariance,
    estimate_normals_depth_change,
    estimate_normals_gradient,
)
from .pipeline import FrameResult, PipelineError, run_frame, run_sequence
from .reconstruct import OrganizedPointCloud, triangulate, valid_fraction, write_ply
from .segmentation import SegmentLabels, segment_by_normals, segment_sizes
from .stereo import (
    DisparityMap,
    lr_consistency_filter,
    match,
    match_block_based,
    match_scanline,
)
from .traversability import (
    GravityVector,
    SurfacePlane,
    TraversabilityClass,
    classify_slope,
    classify_step,
    classify_terrain,
    find_dominant_ground,
    fit_plane_pca,
    gravity_from_tilt,
    min_inliers,
    quality_check,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "Config",
    "ConfigError",
    "DisparityMap",
    "FrameResult",
    "GravityVector",
    "IntegralImage",
    "MatcherParams",
    "NormalMap",
    "OrganizedPointCloud",
    "PipelineError",
    "PipelineParams",
    "SegmentLabels",
    "SurfacePlane",
    "TraversabilityClass",
    "TraversabilityParams",
    "build_integral",
    "classify_slope",
    "classify_step",
    "classify_terrain",
    "estimate_normals",
    "estimate_normals_covariance",
    "estimate_normals_depth_change",
    "estimate_normals_gradient",
    "find_dominant_ground",
    "fit_plane_pca",
    "gravity_from_tilt",
    "load_config",
    "lr_consistency_filter",
    "match",
    "match_block_based",
    "match_scanline",
    "min_inliers",
    "quality_check",
    "run_frame",
    "run_sequence",
    "segment_by_normals",
    "segment_sizes",
    "triangulate",
    "valid_fraction",
    "write_ply",
]
