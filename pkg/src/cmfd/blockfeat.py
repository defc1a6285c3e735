"""Block features of circular domains: PCET moment magnitudes and the DCT-SVD λ.

Both features are compared between two domains with thresholds that adapt
to the variance difference of the domains (``sigma_s``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.fft import dctn

from .errors import InvalidInputError
from .imgcore import DiskSample, GrayImage, disk_offsets, pixel_center, sample_disk

PCET = "pcet"
DCT = "dct"


@dataclass(frozen=True)
class PcetFeature:
    magnitudes: np.ndarray  # |M_nl| for n, l in 0..max_order, row-major in n
    variance: float = 0.0


@dataclass(frozen=True)
class DctLambda:
    lam: float
    variance: float


DomainFeature = Union[PcetFeature, DctLambda]


@lru_cache(maxsize=64)
def _pcet_orders(max_order: int) -> tuple[np.ndarray, np.ndarray]:
    n, l = np.meshgrid(np.arange(max_order + 1), np.arange(max_order + 1), indexing="ij")
    return n.ravel(), l.ravel()


def compute_pcet(disk: DiskSample, max_order: int = 3) -> PcetFeature:
    """Magnitudes of the polar complex exponential moments of a disk.

    The disk is mapped to the unit disk. Each sample covers an equal share
    ``π / count`` of its area, so a constant disk of value ``c`` has
    ``|M_00| = c`` exactly.
    """
    if disk.count < 4:
        raise InvalidInputError("PCET needs a disk of at least 4 pixels")
    if max_order < 0:
        raise InvalidInputError("max_order must be >= 0")
    rho = np.hypot(disk.dx, disk.dy) / disk.radius
    theta = np.arctan2(disk.dy, disk.dx)
    n, l = _pcet_orders(max_order)
    dA = math.pi / disk.count
    phase = 2.0 * math.pi * n[:, None] * rho[None, :] ** 2 + l[:, None] * theta[None, :]
    basis = np.exp(-1j * phase)
    # the angular factor is undefined at the origin; a fixed phase there would
    # not turn with the disk and breaks rotation invariance for l != 0
    basis[(l[:, None] != 0) & (rho[None, :] == 0)] = 0.0
    M = (basis @ disk.values) * dA / math.pi
    return PcetFeature(np.abs(M), disk.variance)


def _disk_block(img: GrayImage, center, radius: float):
    """Bounding square of the disk, clipped to the image, outside-disk pixels zeroed."""
    if radius < 1:
        raise InvalidInputError("radius must be >= 1")
    cx, cy = pixel_center(img.shape, center)
    n = int(math.floor(radius))
    x0, x1 = max(cx - n, 0), min(cx + n + 1, img.width)
    y0, y1 = max(cy - n, 0), min(cy + n + 1, img.height)
    block = img.data[y0:y1, x0:x1]
    m = _disk_mask(float(radius))[y0 - (cy - n) : y1 - (cy - n), x0 - (cx - n) : x1 - (cx - n)]
    return np.where(m, block, 0.0), block[m]


@lru_cache(maxsize=256)
def _disk_mask(radius: float) -> np.ndarray:
    n = int(math.floor(radius))
    m = np.zeros((2 * n + 1, 2 * n + 1), dtype=bool)
    dx, dy = disk_offsets(radius)
    m[dy + n, dx + n] = True
    m.flags.writeable = False
    return m


def block_lambda(block) -> float:
    """Largest singular value of the orthonormal 2-D DCT-II of a rectangular block."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2:
        raise InvalidInputError("block must be 2-D")
    if not block.size:
        return 0.0
    return float(np.linalg.svd(dctn(block, type=2, norm="ortho"), compute_uv=False)[0])


def compute_dct_lambda(img: GrayImage, center, radius: float) -> DctLambda:
    """``block_lambda`` of the disk's bounding block with pixels outside the disk zeroed."""
    block, vals = _disk_block(img, center, radius)
    return DctLambda(block_lambda(block), float(vals.var()) if vals.size else 0.0)


def adaptive_thresholds(sigma_s: float) -> tuple[float, float]:
    """(K_PCET, K_DCT) for a variance difference ``sigma_s``."""
    if sigma_s < 0 or math.isnan(sigma_s):
        raise InvalidInputError("sigma_s must be >= 0")
    if sigma_s <= 0.1:
        k_pcet = 1.0
    elif sigma_s <= 1.0:
        k_pcet = 25.0
    else:
        k_pcet = 75.0
    if sigma_s <= 1.0:
        k_dct = 25.0
    elif sigma_s <= 10.0:
        k_dct = 50.0
    else:
        k_dct = 100.0
    return k_pcet, k_dct


def sigma_s(a: DomainFeature, b: DomainFeature, sigma_scale: float = 1.0) -> float:
    """Absolute variance difference of two domains on the ``[0, 255 / sigma_scale]`` scale."""
    return abs(a.variance - b.variance) / (sigma_scale * sigma_scale)


def feature_distance(a: DomainFeature, b: DomainFeature) -> float:
    if isinstance(a, PcetFeature) and isinstance(b, PcetFeature):
        return float(np.linalg.norm(a.magnitudes - b.magnitudes))
    if isinstance(a, DctLambda) and isinstance(b, DctLambda):
        return abs(a.lam - b.lam)
    raise InvalidInputError("cannot compare features of different modes")


def domains_match(a: DomainFeature, b: DomainFeature, mode: str, sigma: float) -> bool:
    """PCET: ||F_a - F_b|| < K_PCET; DCT: |λ_a - λ_b| < K_DCT."""
    expected = PcetFeature if mode == PCET else DctLambda if mode == DCT else None
    if expected is None:
        raise InvalidInputError(f"unknown mode {mode!r}")
    if not (isinstance(a, expected) and isinstance(b, expected)):
        raise InvalidInputError(f"features do not match mode {mode!r}")
    k_pcet, k_dct = adaptive_thresholds(sigma)
    return feature_distance(a, b) < (k_pcet if mode == PCET else k_dct)


def domain_feature(img: GrayImage, center, radius: float, mode: str, max_order: int = 3) -> DomainFeature:
    if mode == PCET:
        return compute_pcet(sample_disk(img, center, radius), max_order)
    if mode == DCT:
        return compute_dct_lambda(img, center, radius)
    raise InvalidInputError(f"unknown mode {mode!r}")
