"""Evolving circular domains coverage and the full detection pipeline.

Each surviving match grows a pair of concentric disks, one per endpoint,
through an increasing radius schedule for as long as the block features of
the two disks stay within the adaptive threshold. The final disks of all
pairs are unioned into the tamper mask, which is then closed
morphologically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import binary_dilation, binary_erosion

from . import blockfeat
from .config import Config
from .errors import InvalidInputError
from .geofilter import filter_matches
from .imgcore import GrayImage, disk_offsets, pixel_center
from .keypoint import Descriptor, extract_all
from .matching import MatchPair, match_with_config

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadiusSchedule:
    radii: tuple

    def __post_init__(self):
        r = self.radii
        if not r or r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise InvalidInputError("radii must be positive and strictly increasing")

    @property
    def r1(self) -> float:
        return self.radii[0]

    @property
    def rm(self) -> float:
        return self.radii[-1]

    def __iter__(self):
        return iter(self.radii)

    def __len__(self):
        return len(self.radii)


def radius_schedule(r1: float = 1.5, rm: float = 37.5, tau: float = 2.0) -> RadiusSchedule:
    """``r1, r1 + tau, ...`` up to ``rm`` (inclusive when reached exactly)."""
    if not (0 < r1 <= rm) or tau <= 0:
        raise InvalidInputError("need 0 < r1 <= rm and tau > 0")
    count = int(math.floor((rm - r1) / tau + 1e-9)) + 1
    return RadiusSchedule(tuple(float(r1 + k * tau) for k in range(count)))


@dataclass(frozen=True)
class CoverageMask:
    mask: np.ndarray  # bool, (height, width)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    def any(self) -> bool:
        return bool(self.mask.any())

    @classmethod
    def empty(cls, height: int, width: int) -> "CoverageMask":
        return cls(np.zeros((height, width), dtype=bool))


def grow_pair(
    img: GrayImage,
    pair: MatchPair,
    sched: RadiusSchedule,
    mode: str = "dct",
    max_order: int = 3,
    sigma_scale: float = 1.0,
) -> Optional[float]:
    """Largest schedule radius up to which the two endpoint disks keep matching.

    Returns None when even the first radius fails.
    """
    last = None
    for r in sched:
        fa = blockfeat.domain_feature(img, pair.a, r, mode, max_order)
        fb = blockfeat.domain_feature(img, pair.b, r, mode, max_order)
        if not blockfeat.domains_match(fa, fb, mode, blockfeat.sigma_s(fa, fb, sigma_scale)):
            break
        last = r
    return last


def paint_disk(mask: np.ndarray, center, radius: float) -> None:
    cx, cy = pixel_center(mask.shape, center)
    dx, dy = disk_offsets(float(radius))
    xs, ys = cx + dx, cy + dy
    ok = (xs >= 0) & (xs < mask.shape[1]) & (ys >= 0) & (ys < mask.shape[0])
    mask[ys[ok], xs[ok]] = True


def cover(
    img: GrayImage,
    matches: Sequence[MatchPair],
    sched: RadiusSchedule,
    mode: str = "dct",
    max_order: int = 3,
    sigma_scale: float = 1.0,
    radii_out: Optional[list] = None,
) -> CoverageMask:
    """Union of both endpoint disks at each pair's final radius."""
    mask = np.zeros(img.shape, dtype=bool)
    for p in matches:
        r = grow_pair(img, p, sched, mode, max_order, sigma_scale)
        if radii_out is not None:
            radii_out.append(r)
        if r is None:
            continue
        paint_disk(mask, p.a, r)
        paint_disk(mask, p.b, r)
    return CoverageMask(mask)


def disk_element(radius: int) -> np.ndarray:
    n = int(radius)
    yy, xx = np.mgrid[-n : n + 1, -n : n + 1]
    return xx * xx + yy * yy <= radius * radius


def default_morph_radius(width: int, height: int) -> int:
    return max(3, int(round(0.01 * max(width, height))))


def morph_refine(mask: CoverageMask, disk_radius: int) -> CoverageMask:
    """Closing (dilate then erode) with a disk; the image border does not erode the mask."""
    if disk_radius < 1:
        raise InvalidInputError("disk_radius must be >= 1")
    se = disk_element(disk_radius)
    pad = 2 * int(disk_radius) + 2
    m = np.pad(mask.mask, pad)
    m = binary_erosion(binary_dilation(m, se), se)
    return CoverageMask(m[pad:-pad, pad:-pad])


@dataclass
class Detection:
    """Everything the pipeline produced for one image."""

    mask: CoverageMask
    raw_mask: CoverageMask
    sift: list = field(default_factory=list)
    lpsd: list = field(default_factory=list)
    matches: list = field(default_factory=list)
    filtered: list = field(default_factory=list)
    radii: list = field(default_factory=list)

    @property
    def forged(self) -> bool:
        return self.mask.any()


def run_pipeline(img: GrayImage, cfg: Config | None = None) -> Detection:
    cfg = cfg or Config()
    sift, lpsd = extract_all(img, cfg)
    matches = match_with_config(sift, lpsd, cfg)
    filtered = filter_matches(matches, cfg)
    sched = radius_schedule(cfg.ecdc.r1, cfg.ecdc.rm, cfg.ecdc.tau)
    bf = cfg.blockfeat
    radii: list = []
    raw = cover(img, filtered, sched, bf.mode, bf.pcet_max_order, bf.sigma_scale, radii_out=radii)
    rad = cfg.morph.radius or default_morph_radius(img.width, img.height)
    mask = morph_refine(raw, rad)
    log.debug(
        "sift=%d lpsd=%d matches=%d filtered=%d forged_px=%d", len(sift), len(lpsd), len(matches), len(filtered), mask.area
    )
    return Detection(mask, raw, sift, lpsd, matches, filtered, radii)


def detect(img: GrayImage, cfg: Config | None = None) -> CoverageMask:
    """extract -> g2NN -> spatial/RANSAC filter -> ECDC cover -> morphological close."""
    return run_pipeline(img, cfg).mask


def write_mask_png(mask: CoverageMask, path) -> None:
    """8-bit single channel, 255 = forged."""
    Image.fromarray(np.where(mask.mask, 255, 0).astype(np.uint8), mode="L").save(Path(path))


def read_mask_png(path) -> CoverageMask:
    with Image.open(path) as im:
        a = np.asarray(im.convert("L"))
    return CoverageMask(a > 127)
