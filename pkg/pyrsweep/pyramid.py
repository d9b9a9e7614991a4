"""Image pyramids, classical feature descriptors and subpixel feature sampling

The descriptor stands in for a learned extractor: 16 fixed channels, each
standardized over the image so variance costs are comparable across channels.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .exceptions import TooSmall, ValidationError

logger = logging.getLogger(__name__)

MIN_LEVEL_SIZE = 8
BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
LUMA_601 = np.array([0.299, 0.587, 0.114])

CENSUS_RADIUS = 2
CENSUS_OFFSETS = [
    (0, CENSUS_RADIUS),
    (CENSUS_RADIUS, CENSUS_RADIUS),
    (CENSUS_RADIUS, 0),
    (CENSUS_RADIUS, -CENSUS_RADIUS),
    (0, -CENSUS_RADIUS),
    (-CENSUS_RADIUS, -CENSUS_RADIUS),
    (-CENSUS_RADIUS, 0),
    (-CENSUS_RADIUS, CENSUS_RADIUS),
]
DOG_SIGMAS = [(1.0, 2.0), (2.0, 4.0), (4.0, 8.0)]

CHANNEL_NAMES = (
    ["intensity", "grad_x", "grad_y"]
    + [f"dog_{lo:g}_{hi:g}" for lo, hi in DOG_SIGMAS]
    + [f"census_{dy:+d}_{dx:+d}" for dy, dx in CENSUS_OFFSETS]
    + ["local_std", "laplacian"]
)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Grayscale float image; RGB(A) inputs are converted with Rec. 601 luma"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[2] < 3:
            return image[:, :, 0]
        return image[:, :, :3] @ LUMA_601
    if image.ndim != 2:
        raise ValidationError(f"expected a 2-D or 3-D image, got shape {image.shape}")
    return image


@dataclass(frozen=True, eq=False)
class ImagePyramid:
    """Grayscale images, level ``l`` sized ``ceil``-halved ``l`` times"""

    levels: List[np.ndarray]

    @property
    def top(self) -> int:
        """Index of the coarsest level"""
        return len(self.levels) - 1

    def __getitem__(self, level: int) -> np.ndarray:
        return self.levels[level]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-pixel descriptor array of shape (H, W, F)"""

    data: np.ndarray
    preset: str = "classic16"

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


def _blur(image: np.ndarray) -> np.ndarray:
    out = ndimage.convolve1d(image, BINOMIAL_5, axis=0, mode="reflect")
    return ndimage.convolve1d(out, BINOMIAL_5, axis=1, mode="reflect")


def build_pyramid(image: np.ndarray, levels: int) -> ImagePyramid:
    """Binomial low-pass and 2x decimation, ``levels + 1`` images in total"""
    if levels < 0:
        raise ValidationError(f"levels must be >= 0, got {levels}")
    base = to_grayscale(image)
    if not np.all(np.isfinite(base)):
        raise ValidationError("image contains non-finite values")
    height, width = base.shape
    for _ in range(levels):
        height, width = (height + 1) // 2, (width + 1) // 2
    if min(height, width, *base.shape) < MIN_LEVEL_SIZE:
        raise TooSmall(
            f"{levels + 1}-level pyramid of a {base.shape[1]}x{base.shape[0]} image "
            f"has a {width}x{height} top level (minimum {MIN_LEVEL_SIZE} px)"
        )
    pyramid = [base]
    for _ in range(levels):
        pyramid.append(_blur(pyramid[-1])[::2, ::2])
    return ImagePyramid(levels=pyramid)


def _standardize(channel: np.ndarray) -> np.ndarray:
    centered = channel - channel.mean()
    var = float(np.mean(centered * centered))
    if var < 1e-12:
        return centered
    return centered / np.sqrt(var)


def _census_scale(image: np.ndarray) -> float:
    spread = float(image.std())
    return 0.25 * spread if spread > 1e-12 else 1.0


def raw_channels(image: np.ndarray) -> np.ndarray:
    """The 16 descriptor channels before standardization, shape (H, W, 16)"""
    img = to_grayscale(image)
    grad_y, grad_x = np.gradient(img)
    channels = [img, grad_x, grad_y]

    blurred = {
        sigma: ndimage.gaussian_filter(img, sigma, mode="nearest")
        for sigma in sorted({s for pair in DOG_SIGMAS for s in pair})
    }
    channels.extend(blurred[lo] - blurred[hi] for lo, hi in DOG_SIGMAS)

    padded = np.pad(img, CENSUS_RADIUS, mode="edge")
    height, width = img.shape
    scale = _census_scale(img)
    for dy, dx in CENSUS_OFFSETS:
        neighbor = padded[
            CENSUS_RADIUS + dy : CENSUS_RADIUS + dy + height,
            CENSUS_RADIUS + dx : CENSUS_RADIUS + dx + width,
        ]
        channels.append(np.tanh((neighbor - img) / scale))

    mean = ndimage.uniform_filter(img, 3, mode="nearest")
    mean_sq = ndimage.uniform_filter(img * img, 3, mode="nearest")
    channels.append(np.sqrt(np.maximum(mean_sq - mean * mean, 0.0)))

    laplacian = ndimage.laplace(img, mode="nearest")
    limit = 3.0 * float(laplacian.std())
    channels.append(np.clip(laplacian, -limit, limit) if limit > 0 else laplacian)
    return np.stack(channels, axis=-1)


def _classic16(image: np.ndarray) -> np.ndarray:
    raw = raw_channels(image)
    return np.stack(
        [_standardize(raw[:, :, c]) for c in range(raw.shape[2])], axis=-1
    )


DESCRIPTORS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "classic16": _classic16,
}


def extract_features(image: np.ndarray, preset: str = "classic16") -> FeatureMap:
    """Standardized descriptor map for one grayscale image"""
    if preset not in DESCRIPTORS:
        raise ValidationError(
            f"unknown descriptor preset '{preset}', choose from {sorted(DESCRIPTORS)}"
        )
    img = to_grayscale(image)
    if not np.all(np.isfinite(img)):
        raise ValidationError("image contains non-finite values")
    return FeatureMap(data=DESCRIPTORS[preset](img), preset=preset)


def sample_features(
    fm: FeatureMap, pixels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear lookup of (N, 2) subpixel locations

    Returns:
        (features, valid): (N, F) features, zero where ``valid`` is False
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    u = pixels[:, 0]
    v = pixels[:, 1]
    with np.errstate(invalid="ignore"):
        valid = (u >= 0) & (u <= fm.width - 1) & (v >= 0) & (v <= fm.height - 1)
    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)

    u0 = np.minimum(np.floor(u).astype(np.int64), max(fm.width - 2, 0))
    v0 = np.minimum(np.floor(v).astype(np.int64), max(fm.height - 2, 0))
    u1 = np.minimum(u0 + 1, fm.width - 1)
    v1 = np.minimum(v0 + 1, fm.height - 1)
    tu = (u - u0)[:, None]
    tv = (v - v0)[:, None]

    data = fm.data
    out = (
        (1.0 - tu) * (1.0 - tv) * data[v0, u0]
        + tu * (1.0 - tv) * data[v0, u1]
        + (1.0 - tu) * tv * data[v1, u0]
        + tu * tv * data[v1, u1]
    )
    out[~valid] = 0.0
    return out, valid


def sample_feature(fm: FeatureMap, pixel: Sequence[float]) -> Tuple[np.ndarray, bool]:
    """Bilinear feature at one subpixel location, zeros when off-image"""
    features, valid = sample_features(fm, np.asarray(pixel, dtype=np.float64))
    return features[0], bool(valid[0])
