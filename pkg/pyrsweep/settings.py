"""Global settings and run configuration for pyrsweep"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

from .exceptions import ConfigurationError


class Settings:  # pylint: disable=too-few-public-methods
    """Holds global numeric policy shared by every module"""

    def __init__(self):
        self.workers = 1  # Thread pool size for volume construction
        self.sentinel_cost = 1e9  # Cost of hypotheses seen by fewer than 2 views
        self.eps_depth = 1e-9  # Smallest depth treated as in front of a camera
        self.border_px = 0.5  # Projections may leave the pixel grid by this much
        self.epipole_eps_px = 2.0  # Degenerate search ranges near the epipole
        self.min_epipolar_rate = 1e-12  # px per unit depth; below is pure rotation
        self.logging_enabled = False
        self.log_dir = ".pyrsweep"  # Default run-record directory

    def __str__(self):
        return (
            f"Settings(workers={self.workers}, sentinel_cost={self.sentinel_cost}, "
            f"border_px={self.border_px}, logging_enabled={self.logging_enabled}, "
            f"log_dir='{self.log_dir}')"
        )


# Global settings instance
settings = Settings()


@dataclass
class FusionConfig:
    """Thresholds for confidence and cross-view geometric consistency"""

    conf_min: float = 0.8
    reproj_px_max: float = 1.0
    rel_depth_max: float = 0.01
    min_consistent_views: int = 3

    def validate(self) -> "FusionConfig":
        """Check threshold ranges, returning self for chaining"""
        for name in ("conf_min", "reproj_px_max", "rel_depth_max"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.min_consistent_views < 2:
            raise ConfigurationError(
                f"min_consistent_views must be >= 2, got {self.min_consistent_views}"
            )
        return self


@dataclass
class PipelineConfig:  # pylint: disable=too-many-instance-attributes
    """Parameters of one coarse-to-fine depth inference run

    ``levels``, ``coarse_planes`` and ``refine_planes`` accept ``None``,
    meaning the value is derived: the level count from the image size, the
    hypothesis counts from the pixel-interval rules.
    """

    levels: Optional[int] = None
    coarse_planes: Optional[int] = 96
    refine_planes: Optional[int] = 8
    sample_offset_px: float = 0.5
    range_offset_px: float = 2.0
    tau: float = 1.0
    n_views: int = 5
    descriptor: str = "classic16"
    workers: Optional[int] = None
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def validate(self) -> "PipelineConfig":
        """Check parameter ranges, returning self for chaining"""
        if self.levels is not None and self.levels < 0:
            raise ConfigurationError(f"levels must be >= 0, got {self.levels}")
        if self.coarse_planes is not None and self.coarse_planes < 2:
            raise ConfigurationError(
                f"coarse_planes must be >= 2, got {self.coarse_planes}"
            )
        if self.refine_planes is not None and (
            self.refine_planes < 2 or self.refine_planes % 2
        ):
            raise ConfigurationError(
                f"refine_planes must be even and >= 2, got {self.refine_planes}"
            )
        if self.sample_offset_px <= 0 or self.range_offset_px <= 0:
            raise ConfigurationError("pixel offsets must be positive")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.n_views < 2:
            raise ConfigurationError(f"n_views must be >= 2, got {self.n_views}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        self.fusion.validate()
        return self

    def resolved_workers(self) -> int:
        """Worker count for this run, falling back to the global setting"""
        return self.workers if self.workers is not None else settings.workers

    def to_dict(self) -> Dict[str, Any]:
        """Plain-dict form for JSON sidecars and run records"""
        return asdict(self)
