"""Grayscale rasters, Gaussian scale space, integral images and disk sampling.

Every raster in the package is a 2-D ``float64`` array indexed ``[row, col]``
(that is ``[y, x]``) holding luminance in ``[0, 255]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import DecodeError, InvalidInputError

# ITU-R BT.601 weights, scaled to integers so pure white stays exactly 255.
_LUMA_WEIGHTS = (299, 587, 114)

GAUSS_TRUNCATE = 3.0
SIFT_SIGMA = 1.6
SIFT_INIT_SIGMA = 0.5


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GrayImage:
    """Immutable luminance raster with values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise InvalidInputError(f"expected a non-empty 2-D raster, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("raster contains non-finite values")
        if a.min() < 0.0 or a.max() > 255.0:
            raise InvalidInputError("raster values must lie in [0, 255]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_array(cls, a, clip: bool = True) -> "GrayImage":
        """Build from any array; RGB input is converted to luminance."""
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 3:
            a = rgb_to_gray(a)
        if clip:
            a = np.clip(a, 0.0, 255.0)
        return cls(a)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luminance of an ``(H, W, 3|4)`` array; alpha is ignored."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb.copy()
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise InvalidInputError(f"cannot convert shape {rgb.shape} to grayscale")
    wr, wg, wb = _LUMA_WEIGHTS
    gray = (wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]) / 1000.0
    return np.clip(gray, 0.0, 255.0)


def read_raster(path) -> np.ndarray:
    """Decode an image file into ``(H, W)`` or ``(H, W, 3)`` float64 pixels."""
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                a = np.asarray(im, dtype=np.float64)
            elif im.mode.startswith("I;16") or im.mode == "I":
                a = np.clip(np.asarray(im, dtype=np.float64) / 257.0, 0.0, 255.0)
            else:
                a = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidInputError(f"{path} has a zero dimension")
    return a


def load_grayscale(path) -> GrayImage:
    """Load PNG/JPEG/BMP as BT.601 luminance clamped to [0, 255]."""
    a = read_raster(path)
    return GrayImage(np.clip(rgb_to_gray(a), 0.0, 255.0))


# --------------------------------------------------------------------------
# Scale space


@dataclass(frozen=True)
class Octave:
    """One octave of the Gaussian pyramid.

    ``sigmas`` are blur levels in the octave's own pixel units; multiply by
    ``factor`` for input-image pixels.
    """

    index: int
    factor: float
    sigmas: np.ndarray
    gaussians: np.ndarray  # (levels, h, w)
    dog: np.ndarray  # (levels - 1, h, w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.gaussians.shape[1:]


@dataclass(frozen=True)
class ScaleSpace:
    octaves: list[Octave]
    scales_per_octave: int
    sigma0: float

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.scales_per_octave)


def upsample2(a: np.ndarray) -> np.ndarray:
    """Linear 2x upsampling on the grid ``x_in = x_out / 2`` (edge replicated)."""
    def along(v, axis):
        v = np.moveaxis(v, axis, 0)
        out = np.empty((2 * v.shape[0],) + v.shape[1:])
        out[0::2] = v
        out[1:-1:2] = 0.5 * (v[:-1] + v[1:])
        out[-1] = v[-1]
        return np.moveaxis(out, 0, axis)

    return along(along(np.asarray(a, dtype=np.float64), 0), 1)


def default_octaves(min_dim: int) -> int:
    return max(1, min(4, int(math.floor(math.log2(min_dim / 16.0)))))


def build_scale_space(
    img: GrayImage,
    octaves: int | None = None,
    scales_per_octave: int = 3,
    sigma0: float = SIFT_SIGMA,
    init_sigma: float = SIFT_INIT_SIGMA,
    upsample: bool = False,
) -> ScaleSpace:
    """Gaussian pyramid with ``scales_per_octave + 3`` levels per octave.

    Level ``i`` of every octave has blur ``sigma0 * k**i`` with
    ``k = 2**(1/scales_per_octave)``; each DoG layer is the difference of two
    adjacent stored levels. ``init_sigma`` is the blur assumed already present
    in the input. With ``upsample`` the input is first doubled by linear
    interpolation and the first octave works at twice the input resolution
    (factor 0.5).
    """
    h, w = img.shape
    if octaves is None:
        octaves = default_octaves(min(h, w))
    if octaves < 1 or scales_per_octave < 1:
        raise InvalidInputError("octaves and scales_per_octave must be >= 1")
    if min(h, w) < (2 ** octaves) * 8:
        raise InvalidInputError(
            f"image {w}x{h} too small for {octaves} octaves (need min side >= {2 ** octaves * 8})"
        )
    k = 2.0 ** (1.0 / scales_per_octave)
    n_levels = scales_per_octave + 3
    sigmas = sigma0 * k ** np.arange(n_levels)

    data, unit = img.data, 1.0
    if upsample:
        data, unit = upsample2(img.data), 0.5
        init_sigma *= 2.0
    pre = math.sqrt(max(sigma0 ** 2 - init_sigma ** 2, 0.0))
    base = gaussian_filter(data, pre, truncate=GAUSS_TRUNCATE, mode="nearest") if pre > 0 else data.copy()

    result = []
    for o in range(octaves):
        levels = [base]
        for s in sigmas[1:]:
            extra = math.sqrt(s * s - sigma0 * sigma0)
            levels.append(gaussian_filter(base, extra, truncate=GAUSS_TRUNCATE, mode="nearest"))
        gauss = np.stack(levels)
        dog = gauss[1:] - gauss[:-1]
        result.append(Octave(o, unit * 2 ** o, _frozen(sigmas), _frozen(gauss), _frozen(dog)))
        # level `scales_per_octave` has blur 2*sigma0, i.e. sigma0 after halving
        base = gauss[scales_per_octave][::2, ::2].copy()
    return ScaleSpace(result, scales_per_octave, sigma0)


# --------------------------------------------------------------------------
# Integral image


@dataclass(frozen=True)
class IntegralImage:
    """Summed-area table of shape ``(height + 1, width + 1)``."""

    table: np.ndarray

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    def rect_sum(self, x: int, y: int, w: int, h: int) -> float:
        """Sum of pixels in columns ``x..x+w-1`` and rows ``y..y+h-1``."""
        if w <= 0 or h <= 0:
            return 0.0
        t = self.table
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, self.width), min(y + h, self.height)
        if x1 <= x0 or y1 <= y0:
            return 0.0
        return float(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0])

    def box_sums(self, x0, y0, x1, y1) -> np.ndarray:
        """Vectorised half-open box sums ``[y0, y1) x [x0, x1)``, clipped to the image."""
        t = self.table
        x0 = np.clip(x0, 0, self.width)
        x1 = np.clip(x1, 0, self.width)
        y0 = np.clip(y0, 0, self.height)
        y1 = np.clip(y1, 0, self.height)
        x1 = np.maximum(x1, x0)
        y1 = np.maximum(y1, y0)
        return t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]


def integral(img: GrayImage) -> IntegralImage:
    t = np.zeros((img.height + 1, img.width + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img.data, axis=0), axis=1, out=t[1:, 1:])
    return IntegralImage(_frozen(t))


# --------------------------------------------------------------------------
# Disk sampling


@dataclass(frozen=True)
class DiskSample:
    center: tuple[float, float]
    radius: float
    dx: np.ndarray
    dy: np.ndarray
    values: np.ndarray
    mean: float = field(default=0.0)
    variance: float = field(default=0.0)

    @property
    def count(self) -> int:
        return int(self.values.size)


@lru_cache(maxsize=256)
def disk_offsets(radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets ``(dx, dy)`` with ``dx**2 + dy**2 <= radius**2``."""
    n = int(math.floor(radius))
    ys, xs = np.mgrid[-n : n + 1, -n : n + 1]
    keep = xs * xs + ys * ys <= radius * radius
    dx, dy = xs[keep], ys[keep]
    dx.flags.writeable = False
    dy.flags.writeable = False
    return dx, dy


def pixel_center(img_shape: Sequence[int], center) -> tuple[int, int]:
    """Round a subpixel ``(x, y)`` to the owning pixel, rejecting out-of-image points."""
    x, y = float(center[0]), float(center[1])
    h, w = img_shape[:2]
    cx, cy = int(math.floor(x + 0.5)), int(math.floor(y + 0.5))
    if not (0 <= cx < w and 0 <= cy < h):
        raise InvalidInputError(f"center ({x:.2f}, {y:.2f}) outside {w}x{h} image")
    return cx, cy


def sample_disk(img: GrayImage, center, radius: float) -> DiskSample:
    """In-bounds pixels whose integer offset from the rounded center lies within ``radius``."""
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    cx, cy = pixel_center(img.shape, center)
    dx, dy = disk_offsets(float(radius))
    xs, ys = cx + dx, cy + dy
    ok = (xs >= 0) & (xs < img.width) & (ys >= 0) & (ys < img.height)
    dx, dy = dx[ok], dy[ok]
    vals = img.data[ys[ok], xs[ok]]
    return DiskSample(
        center=(float(center[0]), float(center[1])),
        radius=float(radius),
        dx=dx,
        dy=dy,
        values=vals,
        mean=float(vals.mean()),
        variance=float(vals.var()),
    )
