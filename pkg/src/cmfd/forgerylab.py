"""Synthetic copy-move forgeries with pixel-exact ground truth.

A rectangular fragment is copied, optionally rotated/scaled/noised, and
pasted elsewhere; an optional image-level attack (global noise, JPEG round
trip, downsampling) is then applied to the whole forged image. The truth
mask marks the source rectangle and the exact pasted footprint.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, map_coordinates, uniform_filter

from .ecdc import CoverageMask
from .errors import InvalidInputError
from .imgcore import GrayImage

# weakest mean gradient magnitude accepted for a "textured" fragment
MIN_TEXTURE = 2.0

KINDS = ("none", "rotate", "scale", "noise_local", "noise_global", "jpeg", "downsample")

SCENARIOS = {
    "plain": [("none", None)],
    "scale": [("scale", float(p)) for p in range(91, 110, 2)] + [("scale", float(p)) for p in (50, 80, 120, 200)],
    "rot": [("rotate", float(d)) for d in (2, 4, 6, 8, 10, 20, 60, 180)],
    "noise_local": [("noise_local", round(0.02 * k, 2)) for k in range(1, 6)],
    "noise_global": [("noise_global", round(0.02 * k, 2)) for k in range(1, 6)],
    "jpeg": [("jpeg", float(q)) for q in range(20, 101, 10)],
    "downsample": [("downsample", float(p)) for p in (90, 70, 50, 30, 10)],
}


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    value: Optional[float] = None

    def __post_init__(self):
        k, v = self.kind, self.value
        if k not in KINDS:
            raise InvalidInputError(f"unknown attack {k!r}")
        if k == "none":
            return
        if v is None:
            raise InvalidInputError(f"attack {k} needs a parameter")
        if k == "rotate" and not -180 < v <= 180:
            raise InvalidInputError("rotation must lie in (-180, 180]")
        if k == "scale" and v <= 0:
            raise InvalidInputError("scale must be positive")
        if k in ("noise_local", "noise_global") and v < 0:
            raise InvalidInputError("noise std must be >= 0")
        if k == "jpeg" and not 1 <= v <= 100:
            raise InvalidInputError("JPEG quality must lie in [1, 100]")
        if k == "downsample" and not 0 < v <= 100:
            raise InvalidInputError("downsample percent must lie in (0, 100]")

    @property
    def label(self) -> str:
        return "none" if self.kind == "none" else f"{self.kind}_{self.value:g}"


@dataclass
class ForgeryCase:
    forged: np.ndarray  # (H, W) or (H, W, C), integer-valued float64 in [0, 255]
    truth: CoverageMask
    spec: AttackSpec
    provenance: dict = field(default_factory=dict)

    @property
    def gray(self) -> GrayImage:
        return GrayImage.from_array(self.forged)


def _as_array(base) -> np.ndarray:
    if isinstance(base, GrayImage):
        return base.data.astype(np.float64)
    a = np.asarray(base, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise InvalidInputError("base must be a 2-D or 3-D raster")
    return a


def _rotation(deg: float) -> tuple[float, float]:
    q, rem = divmod(deg, 90.0)
    if rem == 0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q) % 4]
    t = math.radians(deg)
    return math.cos(t), math.sin(t)


def fragment_transform(spec: AttackSpec) -> tuple[float, float, float]:
    """(cos, sin, scale) of the fragment-level geometric transform."""
    c, s = _rotation(spec.value) if spec.kind == "rotate" else (1.0, 0.0)
    k = spec.value / 100.0 if spec.kind == "scale" else 1.0
    return c, s, k


def paste_footprint(shape, src_rect, dst_offset, spec: AttackSpec):
    """Destination pixels of the transformed fragment and their source coordinates.

    Positive rotation turns the fragment counter-clockwise as displayed
    (rows grow downwards).
    """
    H, W = shape[:2]
    x, y, w, h = src_rect
    c, s, k = fragment_transform(spec)
    csx, csy = x + (w - 1) / 2.0, y + (h - 1) / 2.0
    cdx, cdy = dst_offset[0] + (w - 1) / 2.0, dst_offset[1] + (h - 1) / 2.0
    half = 0.5 * k * (abs(c) * w + abs(s) * h) + 2, 0.5 * k * (abs(s) * w + abs(c) * h) + 2
    bx0, bx1 = int(math.floor(cdx - half[0])), int(math.ceil(cdx + half[0]))
    by0, by1 = int(math.floor(cdy - half[1])), int(math.ceil(cdy + half[1]))
    yy, xx = np.mgrid[by0 : by1 + 1, bx0 : bx1 + 1]
    ux, uy = (xx - cdx) / k, (yy - cdy) / k
    # inverse of the display-CCW rotation [[c, s], [-s, c]]
    sx = csx + c * ux - s * uy
    sy = csy + s * ux + c * uy
    inside = (sx >= x - 0.5) & (sx < x + w - 0.5) & (sy >= y - 0.5) & (sy < y + h - 0.5)
    xx, yy, sx, sy = xx[inside], yy[inside], sx[inside], sy[inside]
    if xx.size == 0 or xx.min() < 0 or yy.min() < 0 or xx.max() >= W or yy.max() >= H:
        raise InvalidInputError("transformed paste does not fit inside the image")
    return xx, yy, sx, sy


def _sample(a: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    coords = np.vstack([sy, sx])
    if a.ndim == 2:
        return map_coordinates(a, coords, order=1, mode="nearest")
    return np.stack([map_coordinates(a[..., ch], coords, order=1, mode="nearest") for ch in range(a.shape[2])], -1)


def _quantize(a: np.ndarray) -> np.ndarray:
    return np.clip(np.round(a), 0.0, 255.0)


def jpeg_roundtrip(a: np.ndarray, quality: int) -> np.ndarray:
    im = Image.fromarray(_quantize(a).astype(np.uint8))
    buf = io.BytesIO()
    im.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as out:
        return np.asarray(out, dtype=np.float64).reshape(a.shape)


def resize(a: np.ndarray, size: tuple[int, int], nearest: bool = False) -> np.ndarray:
    """Resize to ``(width, height)``; bilinear for images, nearest for masks."""
    if a.dtype == bool:
        im = Image.fromarray(a.astype(np.uint8) * 255)
        return np.asarray(im.resize(size, Image.NEAREST)) > 127
    im = Image.fromarray(_quantize(a).astype(np.uint8))
    return np.asarray(im.resize(size, Image.NEAREST if nearest else Image.BILINEAR), dtype=np.float64)


def synthesize(base, src_rect, dst_offset, spec: AttackSpec = AttackSpec(), seed: int = 0) -> ForgeryCase:
    """Copy ``src_rect = (x, y, w, h)`` to ``dst_offset = (x, y)`` under ``spec``."""
    a = _as_array(base)
    H, W = a.shape[:2]
    x, y, w, h = (int(v) for v in src_rect)
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > W or y + h > H:
        raise InvalidInputError("source rectangle out of bounds")
    rng = np.random.default_rng(seed)
    geo = spec if spec.kind in ("rotate", "scale") else AttackSpec()
    xx, yy, sx, sy = paste_footprint(a.shape, (x, y, w, h), dst_offset, geo)
    forged = a.copy()
    frag = _sample(a, sx, sy)
    if spec.kind == "noise_local":
        frag = frag + rng.normal(0.0, spec.value * 255.0, frag.shape)
    forged[yy, xx] = frag
    forged = _quantize(forged)

    truth = np.zeros((H, W), dtype=bool)
    truth[y : y + h, x : x + w] = True
    truth[yy, xx] = True

    if spec.kind == "noise_global":
        forged = _quantize(forged + rng.normal(0.0, spec.value * 255.0, forged.shape))
    elif spec.kind == "jpeg":
        forged = jpeg_roundtrip(forged, int(spec.value))
    elif spec.kind == "downsample":
        size = (max(1, int(round(W * spec.value / 100.0))), max(1, int(round(H * spec.value / 100.0))))
        forged = resize(forged, size)
        truth = resize(truth, size)

    prov = {
        "src_rect": [x, y, w, h],
        "dst_offset": [int(dst_offset[0]), int(dst_offset[1])],
        "seed": int(seed),
        "paste_pixels": int(xx.size),
    }
    return ForgeryCase(forged, CoverageMask(truth), spec, prov)


def scenario_specs(scenario: str) -> list[AttackSpec]:
    if scenario not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    return [AttackSpec(k, v) for k, v in SCENARIOS[scenario]]


def max_extent(specs: Sequence[AttackSpec]) -> float:
    """Largest bounding-box growth factor of the fragment over a set of attacks."""
    grow = 1.0
    for sp in specs:
        c, s, k = fragment_transform(sp)
        grow = max(grow, k * (abs(c) + abs(s)))
    return grow


def texture_energy(g: np.ndarray, frag: int) -> np.ndarray:
    """Mean gradient magnitude (gray levels per pixel, after a sigma-1 blur) over ``frag`` windows."""
    gy, gx = np.gradient(gaussian_filter(np.asarray(g, dtype=np.float64), 1.0))
    return uniform_filter(np.hypot(gx, gy), frag)


def choose_placement(
    base,
    frag: int,
    extent: float = 1.0,
    seed: int = 0,
    gap: int = 16,
    tries: int = 400,
    min_texture: float = MIN_TEXTURE,
):
    """Pick a textured source square and a destination leaving room for ``extent`` growth.

    Returns ``(src_rect, dst_offset)``. Source candidates are ranked by mean
    gradient magnitude; a source below ``min_texture`` is refused so that
    smooth images raise instead of yielding featureless fragments.
    """
    a = _as_array(base)
    g = a if a.ndim == 2 else a[..., :3].mean(axis=2)
    H, W = g.shape
    rng = np.random.default_rng(seed)
    sd = texture_energy(g, frag)
    half_ext = extent * frag / 2.0 + 2
    lo = int(math.ceil(half_ext - frag / 2.0))
    if W - frag - lo < lo or H - frag - lo < lo:
        raise InvalidInputError("image too small for the requested fragment")
    cands = []
    for _ in range(tries):
        sx_, sy_ = rng.integers(0, W - frag + 1), rng.integers(0, H - frag + 1)
        dx_, dy_ = rng.integers(lo, W - frag - lo + 1), rng.integers(lo, H - frag - lo + 1)
        # destination box at its largest vs. source square
        d0x, d0y = dx_ + frag / 2.0 - half_ext, dy_ + frag / 2.0 - half_ext
        d1x, d1y = dx_ + frag / 2.0 + half_ext, dy_ + frag / 2.0 + half_ext
        sep = max(d0x - (sx_ + frag), sx_ - d1x, d0y - (sy_ + frag), sy_ - d1y)
        if sep < gap:
            continue
        score = sd[min(sy_ + frag // 2, H - 1), min(sx_ + frag // 2, W - 1)]
        cands.append((score, int(sx_), int(sy_), int(dx_), int(dy_)))
    if not cands:
        raise InvalidInputError("could not place a non-overlapping fragment")
    cands.sort(key=lambda c: -c[0])
    # best-textured quarter, then a seeded pick for variety
    pick = cands[int(rng.integers(0, max(1, len(cands) // 4)))]
    score, sx_, sy_, dx_, dy_ = pick
    if score < min_texture:
        raise InvalidInputError(f"no textured source found (gradient energy {score:.2f} < {min_texture})")
    return (sx_, sy_, frag, frag), (dx_, dy_)


def attack_suite(
    base,
    scenario: str,
    src_rect=None,
    dst_offset=None,
    seed: int = 0,
    frag: Optional[int] = None,
) -> list[ForgeryCase]:
    """One forgery per parameter value of ``scenario`` with a shared placement."""
    specs = scenario_specs(scenario)
    a = _as_array(base)
    if src_rect is None or dst_offset is None:
        frag = frag or int(np.clip(min(a.shape[:2]) // 5, 32, 160))
        src_rect, dst_offset = choose_placement(a, frag, max_extent(specs), seed)
    out = []
    for idx, sp in enumerate(specs):
        case_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
        case = synthesize(a, src_rect, dst_offset, sp, case_seed)
        case.provenance["scenario"] = scenario
        out.append(case)
    return out


# --------------------------------------------------------------------------
# On-disk layout


def write_case(case: ForgeryCase, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_quantize(case.forged).astype(np.uint8)).save(d / "forged.png")
    Image.fromarray(np.where(case.truth.mask, 255, 0).astype(np.uint8), mode="L").save(d / "truth.png")
    meta = {"spec": asdict(case.spec), "provenance": case.provenance, "forged": bool(case.truth.any())}
    (d / "case.json").write_text(json.dumps(meta, indent=2))
    return d


def write_suite(cases: Sequence[ForgeryCase], out_dir, scenario: str, base=None, name: str = "case") -> Path:
    """Write case directories plus ``manifest.json``; ``base`` adds a pristine control."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, case in enumerate(cases):
        cid = f"{name}_{i:03d}_{case.spec.label}"
        write_case(case, out / cid)
        entries.append(
            {"id": cid, "dir": cid, "attack": case.spec.kind, "param": case.spec.value, "forged": True}
        )
    if base is not None:
        a = _as_array(base)
        pristine = ForgeryCase(_quantize(a), CoverageMask.empty(*a.shape[:2]), AttackSpec(), {"pristine": True})
        cid = f"{name}_original"
        write_case(pristine, out / cid)
        entries.append({"id": cid, "dir": cid, "attack": "none", "param": None, "forged": False})
    manifest = {"scenario": scenario, "cases": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
