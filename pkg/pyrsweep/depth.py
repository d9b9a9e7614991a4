"""Depth estimation from probability volumes and the coarse-to-fine driver

The coarsest level regresses absolute depth over a full plane sweep; every
finer level upsamples the previous estimate and regresses a residual over a
partial volume of ``refine_planes`` hypotheses per pixel.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cost_volume import (
    CostVolume,
    ProbabilityVolume,
    aggregate,
    build_coarse_volume,
    build_partial_volume,
    to_probability,
    write_volume,
)
from .exceptions import ValidationError
from .geometry import CameraView, depth_interval_for_offset, planes_for_interval
from .pipeline_manager import Pipeline, parallel_map
from .pyramid import FeatureMap, build_pyramid, extract_features, to_grayscale
from .settings import PipelineConfig

logger = logging.getLogger(__name__)

CONFIDENCE_WINDOW = 4
COARSEST_TARGET = 64


@dataclass(eq=False)
class DepthMap:
    """Depth raster with validity, confidence and per-level metadata

    Invalid pixels may hold any value; valid pixels always carry a finite
    positive depth.
    """

    depth: np.ndarray
    valid: np.ndarray
    confidence: Optional[np.ndarray] = None
    level: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ValidationError(f"depth must be 2-D, got shape {self.depth.shape}")
        valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != self.depth.shape:
            raise ValidationError("valid mask shape does not match depth")
        with np.errstate(invalid="ignore"):
            self.valid = valid & np.isfinite(self.depth) & (self.depth > 0)
        if self.confidence is None:
            self.confidence = self.valid.astype(np.float64)
        confidence = np.asarray(self.confidence, dtype=np.float64)
        if confidence.shape != self.depth.shape:
            raise ValidationError("confidence shape does not match depth")
        self.confidence = np.clip(np.nan_to_num(confidence, nan=0.0), 0.0, 1.0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape

    @classmethod
    def from_depth(cls, depth: np.ndarray, level: int = 0) -> "DepthMap":
        """Map whose validity is the finite positive pixels of ``depth``"""
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth=depth, valid=np.isfinite(depth), level=level)


def auto_levels(width: int, height: int) -> int:
    """Level count putting the coarsest level near 80x64 for 160x128 input"""
    return max(1, int(math.floor(math.log2(min(width, height) / COARSEST_TARGET))))


def window_confidence(probs: np.ndarray) -> np.ndarray:
    """Best sum of 4 consecutive probabilities among windows holding the argmax"""
    count = probs.shape[-1]
    if count <= CONFIDENCE_WINDOW:
        return np.clip(probs.sum(axis=-1), 0.0, 1.0)
    sums = np.lib.stride_tricks.sliding_window_view(
        probs, CONFIDENCE_WINDOW, axis=-1
    ).sum(axis=-1)
    peak = probs.argmax(axis=-1)[..., None]
    starts = np.clip(
        peak - (CONFIDENCE_WINDOW - 1) + np.arange(CONFIDENCE_WINDOW),
        0,
        count - CONFIDENCE_WINDOW,
    )
    return np.clip(np.take_along_axis(sums, starts, axis=-1).max(axis=-1), 0.0, 1.0)


def soft_argmax_coarse(P: ProbabilityVolume) -> DepthMap:
    """Expected depth over an absolute hypothesis set"""
    hyps = P.hypotheses
    if hyps.kind != "absolute":
        raise ValidationError("coarse estimation needs an absolute hypothesis set")
    depth = np.clip((P.probs * hyps.depths).sum(axis=2), hyps.d_min, hyps.d_max)
    return DepthMap(
        depth=depth,
        valid=~P.low_confidence,
        confidence=window_confidence(P.probs),
        level=P.level,
    )


def soft_argmax_residual(P: ProbabilityVolume, D_up: DepthMap) -> DepthMap:
    """Upsampled depth plus the expected residual, clamped to the depth range"""
    hyps = P.hypotheses
    if hyps.kind != "residual":
        raise ValidationError("residual estimation needs a residual hypothesis set")
    if D_up.shape != P.probs.shape[:2]:
        raise ValidationError(
            f"upsampled depth {D_up.shape} does not match volume {P.probs.shape[:2]}"
        )
    residuals = hyps.offsets * hyps.interval[:, :, None]
    depth = hyps.base + (P.probs * residuals).sum(axis=2)
    depth = np.clip(depth, hyps.d_min, hyps.d_max)
    return DepthMap(
        depth=depth,
        valid=D_up.valid & ~P.low_confidence,
        confidence=window_confidence(P.probs),
        level=P.level,
    )


def _tap_indices(size: int, out_size: int) -> Tuple[np.ndarray, np.ndarray]:
    # Output sample j sits at input coordinate j / 2
    base = np.arange(out_size) // 2
    frac = (np.arange(out_size) % 2) * 0.5
    taps = np.clip(base[:, None] + np.arange(-1, 3), 0, size - 1)
    return taps, frac


def _upsample_axis(
    values: np.ndarray, valid: np.ndarray, conf: np.ndarray, out_size: int, axis: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = np.moveaxis(values, axis, 0)
    valid = np.moveaxis(valid, axis, 0)
    conf = np.moveaxis(conf, axis, 0)
    taps, frac = _tap_indices(values.shape[0], out_size)
    shape = (-1,) + (1,) * (values.ndim - 1)
    t = frac.reshape(shape)

    p1 = values[taps[:, 1]]
    d0 = values[taps[:, 0]] - p1
    d2 = values[taps[:, 2]] - p1
    d3 = values[taps[:, 3]] - p1
    a1 = 0.5 * (d2 - d0)
    a2 = 0.5 * (2.0 * d0 + 4.0 * d2 - d3)
    a3 = 0.5 * (-d0 - 3.0 * d2 + d3)
    out = p1 + t * (a1 + t * (a2 + t * a3))

    # Every tap carries weight at t = 0.5; only the center tap at t = 0
    all_taps = np.all(valid[taps], axis=1)
    out_valid = np.where(t > 0, all_taps, valid[taps[:, 1]])
    out_conf = (1.0 - t) * conf[taps[:, 1]] + t * conf[taps[:, 2]]
    return (
        np.moveaxis(out, 0, axis),
        np.moveaxis(out_valid, 0, axis),
        np.moveaxis(out_conf, 0, axis),
    )


def upsample_depth(D: DepthMap, shape: Optional[Tuple[int, int]] = None) -> DepthMap:
    """Separable Catmull-Rom upsampling to twice the resolution

    Output pixel ``(i, j)`` samples input coordinate ``(i / 2, j / 2)`` with
    clamped taps. An output pixel is valid only when every tap with nonzero
    weight is valid. Confidence is interpolated linearly.

    Args:
        D: Depth map to upsample
        shape: Output (H, W); defaults to twice the input size. Odd-sized
            finer levels pass ``2 * size - 1``.
    """
    height, width = D.shape
    out_h, out_w = shape if shape is not None else (2 * height, 2 * width)
    fits_h = 2 * height - 1 <= out_h <= 2 * height
    fits_w = 2 * width - 1 <= out_w <= 2 * width
    if not (fits_h and fits_w):
        raise ValidationError(f"cannot upsample {D.shape} to {(out_h, out_w)}")
    values = np.where(D.valid, D.depth, 0.0)
    values, valid, conf = _upsample_axis(values, D.valid, D.confidence, out_h, 0)
    values, valid, conf = _upsample_axis(values, valid, conf, out_w, 1)
    return DepthMap(
        depth=np.where(valid, values, np.nan),
        valid=valid,
        confidence=conf,
        level=max(D.level - 1, 0),
    )


def downsample_depth(D: DepthMap) -> DepthMap:
    """2x decimation keeping the even pixels, consistent with the image pyramid"""
    return DepthMap(
        depth=D.depth[::2, ::2],
        valid=D.valid[::2, ::2],
        confidence=D.confidence[::2, ::2],
        level=D.level + 1,
        meta=dict(D.meta),
    )


def depth_pyramid(D: DepthMap, levels: int) -> List[DepthMap]:
    """Ground-truth maps for levels ``0..levels``, finest first"""
    maps = [D]
    for _ in range(levels):
        maps.append(downsample_depth(maps[-1]))
    return maps


def _volume_meta(
    cv: CostVolume, P: ProbabilityVolume, config: PipelineConfig
) -> Dict[str, Any]:
    hyps = cv.hypotheses
    if hyps.kind == "absolute":
        interval = (hyps.d_max - hyps.d_min) / hyps.count
    else:
        interval = float(np.mean(hyps.interval))
    return {
        "level": cv.level,
        "kind": hyps.kind,
        "planes": hyps.count,
        "hypotheses_per_pixel": cv.hypotheses_per_pixel,
        "volume_cells": cv.cells,
        "mean_interval": interval,
        "low_confidence_pixels": int(P.low_confidence.sum()),
        "tau": config.tau,
        "descriptor": config.descriptor,
    }


def refine_planes_for(config: PipelineConfig) -> int:
    """Residual hypothesis count, derived from the pixel offsets when unset"""
    if config.refine_planes is not None:
        return config.refine_planes
    return max(2, 2 * int(round(config.range_offset_px / config.sample_offset_px)))


class DepthInference:
    """Coarse-to-fine depth inference for one reference view

    Stages run through a ``Pipeline``: pyramids, features, the coarse sweep
    and the residual refinement of every finer level.
    """

    def __init__(
        self,
        config: Optional[PipelineConfig] = None,
        dump_dir: Optional[Union[str, Path]] = None,
    ) -> None:
        self.config = (config or PipelineConfig()).validate()
        self.workers = self.config.resolved_workers()
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        self.pipeline = Pipeline()
        self.pipeline.register_step(
            "pyramids", ["images", "levels"], ["pyramids"], self._pyramids
        )
        self.pipeline.register_step(
            "features", ["pyramids"], ["features"], self._features
        )
        self.pipeline.register_step(
            "coarse", ["features", "cams", "levels"], ["coarse"], self._coarse
        )
        self.pipeline.register_step(
            "refine", ["features", "cams", "coarse"], ["depth_maps"], self._refine
        )

    def _pyramids(self, images: List[np.ndarray], levels: int):
        return parallel_map(
            lambda image: build_pyramid(image, levels), images, self.workers
        )

    def _features(self, pyramids) -> List[List[FeatureMap]]:
        # features[level][view]
        descriptor = self.config.descriptor
        per_view = parallel_map(
            lambda pyr: [extract_features(img, descriptor) for img in pyr.levels],
            pyramids,
            self.workers,
        )
        return [list(level) for level in zip(*per_view)]

    def _dump(self, cv: CostVolume) -> None:
        if self.dump_dir is None:
            return
        self.dump_dir.mkdir(parents=True, exist_ok=True)
        write_volume(self.dump_dir / f"cost_l{cv.level}.vol", cv.costs, cv.level)

    def _coarse(self, features, cams: List[CameraView], levels: int) -> DepthMap:
        cfg = self.config
        ref = cams[0]
        planes = cfg.coarse_planes
        if planes is None:
            interval = depth_interval_for_offset(
                ref, cams[1:], levels, cfg.sample_offset_px
            )
            planes = planes_for_interval(ref, interval)
        level_feats = features[levels]
        cv = build_coarse_volume(
            level_feats[0], level_feats[1:], cams, planes, levels, workers=self.workers
        )
        cv = aggregate(cv, self.workers)
        self._dump(cv)
        P = to_probability(cv, cfg.tau)
        D = soft_argmax_coarse(P)
        D.meta = _volume_meta(cv, P, cfg)
        logger.info("level %d: %d planes, %d cells", levels, planes, cv.cells)
        return D

    def _refine(
        self, features, cams: List[CameraView], coarse: DepthMap
    ) -> List[DepthMap]:
        cfg = self.config
        planes = refine_planes_for(cfg)
        maps = [coarse]
        for level in range(coarse.level - 1, -1, -1):
            level_feats = features[level]
            ref_feat = level_feats[0]
            D_up = upsample_depth(maps[-1], shape=(ref_feat.height, ref_feat.width))
            cv = build_partial_volume(
                ref_feat,
                level_feats[1:],
                cams,
                D_up.depth,
                planes,
                level,
                cfg.range_offset_px,
                cfg.sample_offset_px,
                workers=self.workers,
            )
            cv = aggregate(cv, self.workers)
            self._dump(cv)
            P = to_probability(cv, cfg.tau)
            D = soft_argmax_residual(P, D_up)
            D.meta = _volume_meta(cv, P, cfg)
            logger.info("level %d: %d residual hypotheses per pixel", level, planes)
            maps.append(D)
        return maps

    def run(
        self, images: Sequence[np.ndarray], cams: Sequence[CameraView]
    ) -> List[DepthMap]:
        """Depth maps from the coarsest level down to level 0

        Args:
            images: Reference image first, then the source images
            cams: Cameras in the same order as ``images``
        """
        if len(images) != len(cams):
            raise ValidationError(f"{len(images)} images but {len(cams)} cameras")
        if len(images) < 2:
            raise ValidationError("at least 2 views are required")
        grays = [to_grayscale(image) for image in images]
        for gray, cam in zip(grays, cams):
            if gray.shape != (cam.height, cam.width):
                raise ValidationError(
                    f"image {gray.shape[1]}x{gray.shape[0]} does not match camera "
                    f"{cam.width}x{cam.height}"
                )
        ref = cams[0]
        levels = self.config.levels
        if levels is None:
            levels = auto_levels(ref.width, ref.height)
        logger.info(
            "inferring %dx%d depth over %d levels with %d source views",
            ref.width,
            ref.height,
            levels + 1,
            len(cams) - 1,
        )
        state = self.pipeline.run(images=grays, cams=list(cams), levels=levels)
        return state["depth_maps"]


def infer_depth_views(
    images: Sequence[np.ndarray],
    cams: Sequence[CameraView],
    config: Optional[PipelineConfig] = None,
    dump_dir: Optional[Union[str, Path]] = None,
) -> List[DepthMap]:
    """Coarse-to-fine depth for ``images[0]``, coarsest level first"""
    return DepthInference(config, dump_dir).run(images, cams)


def infer_depth(
    ref_id: int,
    view_ids: Optional[Sequence[int]],
    dataset,
    config: Optional[PipelineConfig] = None,
    dump_dir: Optional[Union[str, Path]] = None,
) -> List[DepthMap]:
    """Coarse-to-fine depth for one dataset view

    Args:
        ref_id: Reference view id
        view_ids: Source view ids; ``None`` selects ``config.n_views - 1``
            sources from the dataset's pair list or camera layout
        dataset: A ``pyrsweep.dataio.Dataset``
        config: Run parameters
        dump_dir: Optional directory for aggregated cost-volume dumps

    Returns:
        Depth maps for levels L..0
    """
    config = (config or PipelineConfig()).validate()
    if view_ids is None:
        view_ids = dataset.select_sources(ref_id, config.n_views - 1)
    view_ids = [int(v) for v in view_ids if int(v) != ref_id]
    if not view_ids:
        raise ValidationError(f"no source views for reference {ref_id}")
    ids = [ref_id, *view_ids]
    logger.info("reference %d with sources %s", ref_id, view_ids)
    images = [dataset.load_image(i) for i in ids]
    cams = [dataset.camera(i) for i in ids]
    return infer_depth_views(images, cams, config, dump_dir)
