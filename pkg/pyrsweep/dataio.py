"""Dataset layout, camera text files, PFM depth maps, PLY clouds and images

Dataset layout::

    root/
      images/00000000.png      8/16-bit grayscale or RGB
      cams/00000000_cam.txt    extrinsic, intrinsic and depth-range text
      depths/00000000.pfm      optional ground-truth depth, NaN = invalid
      pair.txt                 optional ranked source views per reference
"""

import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement, PlyParseError

from .depth import DepthMap
from .exceptions import (
    NonFiniteValue,
    NonOrthonormalRotation,
    ParseError,
    UnsupportedFormat,
    ValidationError,
)
from .fusion import PointCloud
from .geometry import ROTATION_TOL, CameraView, rotation_error
from .pyramid import to_grayscale

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_DEPTH_COUNT = 192
ROTATION_REPAIR_TOL = 1e-6
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


# Camera files


def _numbers(path: str, lineno: int, line: str, count: int, what: str) -> List[float]:
    tokens = [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", line)]
    if len(tokens) != count:
        raise ParseError(
            f"{what}: expected {count} values, found {len(tokens)}",
            path=path,
            line=lineno,
            column=1,
        )
    return [_real(path, lineno, column, token) for column, token in tokens]


def _real(path: str, lineno: int, column: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(
            f"'{token}' is not a number", path=path, line=lineno, column=column
        ) from None
    if not math.isfinite(value):
        raise NonFiniteValue(
            f"non-finite value '{token}'", path=path, line=lineno, column=column
        )
    return value


def gram_schmidt(R: np.ndarray) -> np.ndarray:
    """Orthonormalize the rows of ``R`` in order"""
    rows = []
    for row in np.asarray(R, dtype=np.float64):
        for done in rows:
            row = row - (row @ done) * done
        rows.append(row / np.linalg.norm(row))
    return np.stack(rows)


def load_camera(
    path: PathLike, image_size: Optional[Tuple[int, int]] = None
) -> CameraView:
    """Parse an MVSNet-style camera text file

    Args:
        path: Camera file
        image_size: (width, height); inferred from the principal point when
            omitted

    Raises:
        ParseError: With the offending line and column
        NonFiniteValue: For NaN or infinite entries
        NonOrthonormalRotation: When R deviates from a rotation by more
            than 1e-6
    """
    name = str(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [(i + 1, line.strip()) for i, line in enumerate(f)]
    content = [(n, line) for n, line in lines if line]
    last = lines[-1][0] if lines else 0

    def take(index: int, what: str) -> Tuple[int, str]:
        if index >= len(content):
            raise ParseError(
                f"truncated file: missing {what}", path=name, line=last + 1
            )
        return content[index]

    def section(start: int, title: str, rows: int, cols: int) -> np.ndarray:
        lineno, header = take(start, f"{title} section")
        if header.lower() != title:
            message = f"expected '{title}', found '{header}'"
            raise ParseError(message, path=name, line=lineno, column=1)
        what = f"{title} row"
        values = []
        for r in range(rows):
            values.append(_numbers(name, *take(start + 1 + r, what), cols, what))
        return np.array(values)

    extrinsic = section(0, "extrinsic", 4, 4)
    K = section(5, "intrinsic", 3, 3)

    lineno, depth_line = take(9, "depth range line")
    tokens = [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", depth_line)]
    if not 2 <= len(tokens) <= 4:
        raise ParseError(
            f"depth range line needs 2 to 4 values, found {len(tokens)}",
            path=name,
            line=lineno,
            column=1,
        )
    values = [_real(name, lineno, column, token) for column, token in tokens]
    d_min, interval = values[0], values[1]
    count = values[2] if len(values) > 2 else DEFAULT_DEPTH_COUNT
    d_max = values[3] if len(values) > 3 else d_min + interval * count

    if not np.array_equal(extrinsic[3], [0.0, 0.0, 0.0, 1.0]):
        raise ParseError(
            "extrinsic bottom row must be 0 0 0 1", path=name, line=content[4][0]
        )
    R = extrinsic[:3, :3]
    error = rotation_error(R)
    if error > ROTATION_REPAIR_TOL:
        raise NonOrthonormalRotation(
            f"rotation deviates from orthonormal by {error:.3g}",
            path=name,
            line=content[1][0],
        )
    if error > ROTATION_TOL:
        logger.warning("%s: repairing rotation deviating by %.3g", name, error)
        R = gram_schmidt(R)

    if image_size is None:
        image_size = (int(round(2 * K[0, 2] + 1)), int(round(2 * K[1, 2] + 1)))
    try:
        return CameraView(
            K=K,
            R=R,
            t=extrinsic[:3, 3],
            width=image_size[0],
            height=image_size[1],
            d_min=d_min,
            d_max=d_max,
        )
    except ValidationError as err:
        raise ParseError(str(err), path=name) from err


def write_camera(
    cam: CameraView,
    path: PathLike,
    interval: Optional[float] = None,
    count: int = DEFAULT_DEPTH_COUNT,
) -> None:
    """Write a camera file with 17 significant digits and an explicit d_max"""
    if interval is None:
        interval = (cam.d_max - cam.d_min) / count
    extrinsic = np.eye(4)
    extrinsic[:3, :3] = cam.R
    extrinsic[:3, 3] = cam.t

    def row(values) -> str:
        return " ".join(f"{v:.17g}" for v in values)

    lines = ["extrinsic"]
    lines += [row(r) for r in extrinsic]
    lines += ["", "intrinsic"]
    lines += [row(r) for r in cam.K]
    lines += ["", row([cam.d_min, interval, count, cam.d_max])]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# PFM


def read_pfm(path: PathLike) -> np.ndarray:
    """Read a grayscale PFM into a top-down float32 (H, W) array"""
    name = str(path)
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            raise UnsupportedFormat(f"{name}: color PFM is not supported")
        if header != b"Pf":
            raise ParseError("not a PFM file", path=name, line=1)
        dims = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", f.readline())
        if not dims:
            raise ParseError("malformed PFM dimensions", path=name, line=2)
        width, height = (int(v) for v in dims.groups())
        try:
            scale = float(f.readline().decode("ascii").strip())
        except ValueError:
            raise ParseError("malformed PFM scale", path=name, line=3) from None
        if scale == 0 or not math.isfinite(scale):
            raise ParseError("PFM scale must be finite and nonzero", path=name, line=3)
        endian = "<" if scale < 0 else ">"
        payload = f.read()
    if len(payload) != 4 * width * height:
        raise ParseError(
            f"PFM payload holds {len(payload)} bytes, expected {4 * width * height}",
            path=name,
        )
    data = np.frombuffer(payload, dtype=endian + "f4").reshape(height, width)
    return np.flipud(data).astype(np.float32)


def write_pfm(data: np.ndarray, path: PathLike) -> None:
    """Write a little-endian grayscale PFM (scale -1.0, rows bottom-up)"""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValidationError(f"PFM data must be 2-D, got shape {data.shape}")
    height, width = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_depth_map(path: PathLike, level: int = 0) -> DepthMap:
    """Depth map whose NaN pixels are invalid"""
    return DepthMap.from_depth(read_pfm(path), level=level)


def write_depth_map(D: DepthMap, path: PathLike) -> None:
    """PFM with NaN at invalid pixels"""
    write_pfm(np.where(D.valid, D.depth, np.nan), path)


# PLY

_PLY_XYZ = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
_PLY_RGB = [("red", "u1"), ("green", "u1"), ("blue", "u1")]


def write_ply(cloud: PointCloud, path: PathLike) -> None:
    """Binary little-endian PLY with float32 x/y/z and optional uchar RGB"""
    dtype = _PLY_XYZ + (_PLY_RGB if cloud.colors is not None else [])
    vertices = np.empty(len(cloud), dtype=dtype)
    for axis, (name, _) in enumerate(_PLY_XYZ):
        vertices[name] = cloud.points[:, axis]
    if cloud.colors is not None:
        for channel, (name, _) in enumerate(_PLY_RGB):
            vertices[name] = cloud.colors[:, channel]
    element = PlyElement.describe(vertices, "vertex")
    PlyData([element], text=False, byte_order="<").write(str(path))


def read_ply(path: PathLike) -> PointCloud:
    """Read the vertex positions and colors of a binary or ASCII PLY"""
    try:
        data = PlyData.read(str(path))
        vertex = data["vertex"]
    except (KeyError, ValueError, PlyParseError) as err:
        raise ParseError(f"unreadable PLY: {err}", path=str(path)) from err
    names = vertex.data.dtype.names
    if not all(axis in names for axis in ("x", "y", "z")):
        raise ParseError("PLY vertices lack x/y/z", path=str(path))
    points = np.column_stack([vertex["x"], vertex["y"], vertex["z"]]).astype(np.float64)
    colors = None
    if all(channel in names for channel in ("red", "green", "blue")):
        colors = np.column_stack([vertex["red"], vertex["green"], vertex["blue"]])
    return PointCloud(points=points, colors=colors)


# Images


def load_image(path: PathLike) -> np.ndarray:
    """Image as float in [0, 1]; RGB images keep their 3 channels"""
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(img, dtype=np.float64) / 65535.0
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img, dtype=np.float64) / 255.0


def save_image(image: np.ndarray, path: PathLike, bits: int = 16) -> None:
    """Save a [0, 1] grayscale or RGB image; 16-bit output is grayscale only"""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if bits == 16:
        pixels = np.round(to_grayscale(image) * 65535.0).astype(np.uint16)
    elif bits == 8:
        pixels = np.round(image * 255.0).astype(np.uint8)
    else:
        raise ValidationError(f"bits must be 8 or 16, got {bits}")
    Image.fromarray(pixels).save(path)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """RGB uint8 copy of a [0, 1] image, for point colors"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    return np.round(np.clip(image[:, :, :3], 0.0, 1.0) * 255.0).astype(np.uint8)


# Pair lists


def read_pair_list(path: PathLike) -> Dict[int, List[int]]:
    """Ranked source ids per reference id from an MVSNet pair file"""
    name = str(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [(i + 1, line.split()) for i, line in enumerate(f) if line.strip()]
    if not lines:
        raise ParseError("empty pair list", path=name, line=1)
    try:
        total = int(lines[0][1][0])
        pairs = {}
        for k in range(total):
            lineno, ref_tokens = lines[1 + 2 * k]
            lineno, tokens = lines[2 + 2 * k]
            count = int(tokens[0])
            if len(tokens) != 1 + 2 * count:
                raise ParseError(
                    f"expected {count} (id, score) pairs", path=name, line=lineno
                )
            pairs[int(ref_tokens[0])] = [int(tokens[1 + 2 * i]) for i in range(count)]
    except IndexError:
        raise ParseError("truncated pair list", path=name) from None
    except ValueError as err:
        raise ParseError(f"malformed pair list: {err}", path=name) from None
    return pairs


def write_pair_list(pairs: Dict[int, Sequence[int]], path: PathLike) -> None:
    """Write ranked pairs; scores count down from the number of sources"""
    lines = [str(len(pairs))]
    for ref in sorted(pairs):
        sources = list(pairs[ref])
        scored = " ".join(
            f"{src} {len(sources) - rank}" for rank, src in enumerate(sources)
        )
        lines += [str(ref), f"{len(sources)} {scored}".rstrip()]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


class Dataset:
    """Views of a dataset directory, keyed by integer id"""

    def __init__(self, root: PathLike, require_views: bool = True):
        self.root = Path(root)
        self.images_dir = self.root / "images"
        self.cams_dir = self.root / "cams"
        self.depths_dir = self.root / "depths"
        self._cameras: Dict[int, CameraView] = {}
        self._images: Dict[int, Path] = {}
        if self.images_dir.is_dir():
            for path in sorted(self.images_dir.iterdir()):
                if path.suffix.lower() in IMAGE_SUFFIXES and path.stem.isdigit():
                    self._images[int(path.stem)] = path
        if require_views and not self._images:
            raise ValidationError(f"{self.root}: no images found under images/")
        for view_id in self._images:
            if not self.camera_path(view_id).is_file():
                raise ValidationError(
                    f"{self.root}: missing camera file for view {view_id}"
                )
        self.pairs: Optional[Dict[int, List[int]]] = None
        if (self.root / "pair.txt").is_file():
            self.pairs = read_pair_list(self.root / "pair.txt")
            for ref, sources in self.pairs.items():
                unknown = [v for v in [ref, *sources] if v not in self._images]
                if unknown:
                    raise ValidationError(
                        f"pair list references unknown views {unknown}"
                    )

    @classmethod
    def create(cls, root: PathLike) -> "Dataset":
        """Empty dataset with its directory layout created"""
        root = Path(root)
        for sub in ("images", "cams", "depths"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        return cls(root, require_views=False)

    @property
    def view_ids(self) -> List[int]:
        return sorted(self._images)

    def image_path(self, view_id: int) -> Path:
        if view_id not in self._images:
            raise ValidationError(f"unknown view {view_id}")
        return self._images[view_id]

    def camera_path(self, view_id: int) -> Path:
        return self.cams_dir / f"{view_id:08d}_cam.txt"

    def depth_path(self, view_id: int) -> Path:
        return self.depths_dir / f"{view_id:08d}.pfm"

    def image_size(self, view_id: int) -> Tuple[int, int]:
        with Image.open(self.image_path(view_id)) as img:
            return img.size

    def camera(self, view_id: int) -> CameraView:
        """Camera of a view, sized from its image"""
        if view_id not in self._cameras:
            self._cameras[view_id] = load_camera(
                self.camera_path(view_id), self.image_size(view_id)
            )
        return self._cameras[view_id]

    def load_image(self, view_id: int) -> np.ndarray:
        """Grayscale float image of a view"""
        return to_grayscale(load_image(self.image_path(view_id)))

    def load_color(self, view_id: int) -> np.ndarray:
        """RGB uint8 image of a view"""
        return to_uint8(load_image(self.image_path(view_id)))

    def ground_truth(self, view_id: int) -> Optional[DepthMap]:
        path = self.depth_path(view_id)
        return read_depth_map(path) if path.is_file() else None

    def nearest_pairs(self, count: int) -> Dict[int, List[int]]:
        """Sources ranked by optical-center distance, ties broken by id"""
        centers = {v: self.camera(v).center for v in self.view_ids}
        pairs = {}
        for ref in self.view_ids:
            others = [v for v in self.view_ids if v != ref]
            dist = {v: float(np.linalg.norm(centers[v] - centers[ref])) for v in others}
            others.sort(key=lambda v: (dist[v], v))
            pairs[ref] = others[:count]
        return pairs

    def select_sources(self, ref_id: int, count: int) -> List[int]:
        """Top-ranked sources from the pair list, else the nearest cameras"""
        if ref_id not in self._images:
            raise ValidationError(f"unknown reference view {ref_id}")
        if self.pairs is not None and ref_id in self.pairs:
            return self.pairs[ref_id][:count]
        return self.nearest_pairs(count)[ref_id]

    def save_view(
        self,
        view_id: int,
        image: np.ndarray,
        cam: CameraView,
        depth: Optional[DepthMap] = None,
    ) -> None:
        """Write one view's image, camera and optional ground truth"""
        path = self.images_dir / f"{view_id:08d}.png"
        save_image(image, path)
        write_camera(cam, self.camera_path(view_id))
        if depth is not None:
            write_depth_map(depth, self.depth_path(view_id))
        self._images[view_id] = path
        self._cameras.pop(view_id, None)

    def save_pair_list(self, pairs: Dict[int, Sequence[int]]) -> None:
        write_pair_list(pairs, self.root / "pair.txt")
        self.pairs = {ref: list(sources) for ref, sources in pairs.items()}
