"""pyrsweep: coarse-to-fine plane-sweep multi-view stereo

Provides:
- infer_depth: Depth pyramid for one dataset view
- consistency_filter / fuse: Depth-map fusion into point clouds
- cloud_metrics / l1_error: Quality metrics
- Dataset: Dataset layout and file formats
- configure: Function to set global settings
"""

from .cost_volume import (
    CostVolume,
    HypothesisSet,
    ProbabilityVolume,
    aggregate,
    build_coarse_volume,
    build_partial_volume,
    to_probability,
    variance_cost,
)
from .dataio import (
    Dataset,
    load_camera,
    read_pfm,
    read_ply,
    write_camera,
    write_pfm,
    write_ply,
)
from .depth import (
    DepthMap,
    infer_depth,
    infer_depth_views,
    soft_argmax_coarse,
    soft_argmax_residual,
    upsample_depth,
)
from .exceptions import (
    ConfigurationError,
    DegenerateDepth,
    DegenerateGeometry,
    EmptyCloud,
    EmptyMask,
    InvalidTemperature,
    NoIntersection,
    NonFiniteValue,
    NonOrthonormalRotation,
    ParseError,
    PipelineError,
    PyrSweepError,
    TooSmall,
    UnsupportedFormat,
    ValidationError,
)
from .fusion import PointCloud, consistency_filter, fuse
from .geometry import (
    CameraView,
    SweepPlane,
    backproject,
    depth_interval_for_offset,
    depth_search_range,
    homography,
    project,
)
from .metrics import cloud_metrics, l1_error
from .pyramid import FeatureMap, build_pyramid, extract_features, sample_feature
from .settings import FusionConfig, PipelineConfig
from .settings import settings as global_settings
from .synth import SceneSpec, make_camera_ring, render


def configure(**kwargs):
    """Set global configuration settings for pyrsweep.

    Example:
        configure(workers=4, logging_enabled=True, log_dir=".pyrsweep")
    """
    for key, value in kwargs.items():
        if not hasattr(global_settings, key):
            raise ConfigurationError(f"Unknown setting '{key}'")
        setattr(global_settings, key, value)


# Package version
__version__ = "0.1.0"

__all__ = [
    "configure",
    "__version__",
    # Geometry
    "CameraView",
    "SweepPlane",
    "homography",
    "project",
    "backproject",
    "depth_interval_for_offset",
    "depth_search_range",
    # Features
    "FeatureMap",
    "build_pyramid",
    "extract_features",
    "sample_feature",
    # Cost volumes
    "HypothesisSet",
    "CostVolume",
    "ProbabilityVolume",
    "variance_cost",
    "build_coarse_volume",
    "build_partial_volume",
    "aggregate",
    "to_probability",
    # Depth
    "DepthMap",
    "PipelineConfig",
    "soft_argmax_coarse",
    "soft_argmax_residual",
    "upsample_depth",
    "infer_depth",
    "infer_depth_views",
    "l1_error",
    # Fusion and evaluation
    "FusionConfig",
    "PointCloud",
    "consistency_filter",
    "fuse",
    "cloud_metrics",
    # Scenes and files
    "SceneSpec",
    "make_camera_ring",
    "render",
    "Dataset",
    "load_camera",
    "write_camera",
    "read_pfm",
    "write_pfm",
    "read_ply",
    "write_ply",
    # Exceptions
    "PyrSweepError",
    "ConfigurationError",
    "ValidationError",
    "PipelineError",
    "DegenerateDepth",
    "DegenerateGeometry",
    "TooSmall",
    "InvalidTemperature",
    "EmptyMask",
    "EmptyCloud",
    "NoIntersection",
    "ParseError",
    "NonFiniteValue",
    "NonOrthonormalRotation",
    "UnsupportedFormat",
]
