"""Grayscale images, gradient fields and the dense multi-scale patch grid.

Images are plain 2-D float64 arrays (rows = y, columns = x) with values in [0, 1].
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

TWO_PI = 2.0 * math.pi
DEFAULT_SCALES = (64, 96, 128, 192)
DEFAULT_STRIDE_FRACTION = 0.5
MAX_SIDE = 1024


class ImageLoadError(OSError):
    pass


class ImageSizeError(ValueError):
    pass


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class GradientField:
    magnitude: np.ndarray
    orientation: np.ndarray

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]


@dataclass(frozen=True, order=True)
class PatchSpec:
    image_id: str
    x: int
    y: int
    side: int

    @property
    def key(self) -> str:
        return f"{self.image_id}_{self.x}_{self.y}_{self.side}"


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luminance 0.299 R + 0.587 G + 0.114 B of an (H, W, 3) array in [0, 1]."""
    gray = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return np.clip(gray, 0.0, 1.0)


def load_gray(path: str | os.PathLike, max_side: int | None = None) -> np.ndarray:
    """Decode a PNG/JPEG file to luminance in [0, 1].

    If ``max_side`` is given, images whose long side exceeds it are
    downscaled bilinearly so the long side equals ``max_side``.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "I;16", "I", "F"):
                arr = np.asarray(im, dtype=np.float64)
                scale = {"L": 255.0, "I;16": 65535.0}.get(im.mode, 1.0)
                gray = np.clip(arr / scale, 0.0, 1.0)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
                gray = rgb_to_gray(rgb)
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageLoadError(f"cannot decode image {os.fspath(path)!r}: {exc}") from exc
    if max_side is not None:
        gray = downscale(gray, max_side)
    return gray


def save_gray(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write an 8-bit grayscale PNG."""
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG", optimize=False)


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling with pixel centres aligned (half-pixel convention)."""
    h, w = img.shape
    if (h, w) == (height, width):
        return img.copy()
    ys = (np.arange(height) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (w / width) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def downscale(img: np.ndarray, max_side: int = MAX_SIDE) -> np.ndarray:
    h, w = img.shape
    long_side = max(h, w)
    if long_side <= max_side:
        return img
    f = max_side / long_side
    return resize_bilinear(img, max(1, round(h * f)), max(1, round(w * f)))


def compute_gradients(img: np.ndarray) -> GradientField:
    """Central differences inside, one-sided differences on the border."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ImageSizeError(f"gradient needs an image of at least 3x3, got {img.shape}")
    dy, dx = np.gradient(img)
    magnitude = np.hypot(dx, dy)
    orientation = np.mod(np.arctan2(dy, dx), TWO_PI)
    # mod can round tiny negative angles up to exactly 2*pi
    orientation[orientation >= TWO_PI] = 0.0
    return GradientField(magnitude, orientation)


def grid_step(side: int, stride_fraction: float) -> int:
    return max(1, int(math.floor(side * stride_fraction + 0.5)))


def dense_grid(width: int, height: int, scales: Sequence[int] = DEFAULT_SCALES,
               stride_fraction: float = DEFAULT_STRIDE_FRACTION, image_id: str = "") -> list[PatchSpec]:
    """Regular overlapping square patches at every scale that fits.

    Ordered by ascending scale, then row-major (y, then x).
    """
    if not scales:
        raise ValueError("scales must be non-empty")
    if not 0.0 < stride_fraction <= 1.0:
        raise ValueError(f"stride_fraction must be in (0, 1], got {stride_fraction}")
    specs = []
    for side in sorted(set(int(s) for s in scales)):
        if side < 1:
            raise ValueError(f"invalid patch side {side}")
        if side > width or side > height:
            continue
        step = grid_step(side, stride_fraction)
        for y in range(0, height - side + 1, step):
            for x in range(0, width - side + 1, step):
                specs.append(PatchSpec(image_id, x, y, side))
    return specs


def check_contained(spec: PatchSpec, height: int, width: int) -> None:
    if spec.side < 1 or spec.x < 0 or spec.y < 0 or spec.x + spec.side > width or spec.y + spec.side > height:
        raise BoundsError(f"patch {spec} not inside {width}x{height} image")


def crop(img: np.ndarray, spec: PatchSpec) -> np.ndarray:
    check_contained(spec, *img.shape)
    return img[spec.y:spec.y + spec.side, spec.x:spec.x + spec.side].copy()
