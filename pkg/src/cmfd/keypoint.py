"""SIFT and log-polar SURF (LPSD) keypoints.

Both detectors run over the whole image and produce two independent
descriptor families; they are never merged into one descriptor space.
Coordinates are ``(x, y) = (column, row)`` in input-image pixels and angles
are measured from +x towards +y (image rows grow downwards).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .config import Config
from .errors import InvalidInputError
from .imgcore import GrayImage, IntegralImage, ScaleSpace, build_scale_space, integral

TWO_PI = 2.0 * math.pi

# SIFT constants
ORI_BINS = 36
ORI_SIG_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
ORI_PEAK_RATIO = 0.8
DESCR_WIDTH = 4
DESCR_BINS = 8
DESCR_SCALE_FACTOR = 3.0
DESCR_MAG_THR = 0.2
SIFT_BORDER = 5
REFINE_STEPS = 5

# LPSD grid
LPSD_RADIAL = 4
LPSD_ANGULAR = 4
LPSD_SUBSAMPLES = 4
LPSD_SUPPORT = 10.0
LPSD_INNER = 0.5

DEDUP_DIST = 2.0


class Kind(str, enum.Enum):
    SIFT = "SIFT"
    LPSD = "LPSD"


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float
    response: float
    kind: Kind
    octave: int = 0
    layer: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {"x": self.x, "y": self.y, "scale": self.scale, "orientation": self.orientation, "kind": self.kind.value}
        )


@dataclass(frozen=True)
class Descriptor:
    keypoint: Keypoint
    vector: np.ndarray


@dataclass(frozen=True)
class HessianResponse:
    """Box-filter det-of-Hessian on a sampling grid of pitch ``step``.

    ``det[i, j]`` belongs to input pixel ``(x, y) = (j * step, i * step)``;
    entries whose filter does not fit inside the image are zero.
    """

    size: int
    step: int
    det: np.ndarray
    laplacian_positive: np.ndarray


# --------------------------------------------------------------------------
# Gradients


def gradient_mag_orient(L: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """Pixel-difference gradient magnitude and orientation in ``[0, 2π)``."""
    h, w = L.shape
    if not (1 <= x < w - 1 and 1 <= y < h - 1):
        raise InvalidInputError(f"({x}, {y}) has no 4-neighbourhood in a {w}x{h} raster")
    dx = float(L[y, x + 1] - L[y, x - 1])
    dy = float(L[y + 1, x] - L[y - 1, x])
    m = math.hypot(dx, dy)
    if m == 0.0:
        return 0.0, 0.0
    return m, math.atan2(dy, dx) % TWO_PI


def _gradient_maps(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = np.zeros_like(L)
    dy = np.zeros_like(L)
    dx[:, 1:-1] = L[:, 2:] - L[:, :-2]
    dy[1:-1, :] = L[2:, :] - L[:-2, :]
    mag = np.hypot(dx, dy)
    ori = np.arctan2(dy, dx) % TWO_PI
    return mag, ori


# --------------------------------------------------------------------------
# SIFT detection


def _dedup(xs, ys, resp, groups) -> np.ndarray:
    """Indices surviving greedy suppression of same-group points within DEDUP_DIST."""
    keep = []
    order = np.lexsort((ys, xs, -np.abs(resp)))
    taken_by_group: dict = {}
    for i in order:
        g = groups[i]
        pts = taken_by_group.setdefault(g, [])
        ok = True
        for j in pts:
            if (xs[i] - xs[j]) ** 2 + (ys[i] - ys[j]) ** 2 < DEDUP_DIST ** 2:
                ok = False
                break
        if ok:
            pts.append(i)
            keep.append(i)
    return np.array(sorted(keep), dtype=int)


def _refine_extrema(D: np.ndarray, cand: np.ndarray, border: int):
    """Quadratic sub-sample refinement of DoG extrema, vectorised over candidates.

    Returns integer locations, offsets, interpolated values and the spatial
    Hessians of the converged candidates.
    """
    n_layers, h, w = D.shape
    s, r, c = (cand[:, i].copy() for i in range(3))
    alive = np.ones(len(s), dtype=bool)
    done = np.zeros(len(s), dtype=bool)
    off = np.zeros((len(s), 3))
    for _ in range(REFINE_STEPS):
        idx = np.nonzero(alive & ~done)[0]
        if idx.size == 0:
            break
        si, ri, ci = s[idx], r[idx], c[idx]
        v = D[si, ri, ci]
        gx = 0.5 * (D[si, ri, ci + 1] - D[si, ri, ci - 1])
        gy = 0.5 * (D[si, ri + 1, ci] - D[si, ri - 1, ci])
        gs = 0.5 * (D[si + 1, ri, ci] - D[si - 1, ri, ci])
        dxx = D[si, ri, ci + 1] + D[si, ri, ci - 1] - 2 * v
        dyy = D[si, ri + 1, ci] + D[si, ri - 1, ci] - 2 * v
        dss = D[si + 1, ri, ci] + D[si - 1, ri, ci] - 2 * v
        dxy = 0.25 * (D[si, ri + 1, ci + 1] - D[si, ri + 1, ci - 1] - D[si, ri - 1, ci + 1] + D[si, ri - 1, ci - 1])
        dxs = 0.25 * (D[si + 1, ri, ci + 1] - D[si + 1, ri, ci - 1] - D[si - 1, ri, ci + 1] + D[si - 1, ri, ci - 1])
        dys = 0.25 * (D[si + 1, ri + 1, ci] - D[si + 1, ri - 1, ci] - D[si - 1, ri + 1, ci] + D[si - 1, ri - 1, ci])
        H = np.stack(
            [np.stack([dxx, dxy, dxs], -1), np.stack([dxy, dyy, dys], -1), np.stack([dxs, dys, dss], -1)], -2
        )
        g = np.stack([gx, gy, gs], -1)
        det = np.linalg.det(H)
        ok = np.abs(det) > 1e-12
        step = np.zeros_like(g)
        if ok.any():
            step[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        alive[idx[~ok]] = False
        conv = ok & np.all(np.abs(step) < 0.5, axis=1)
        done[idx[conv]] = True
        off[idx[conv]] = step[conv]
        mv = idx[ok & ~conv]
        c[mv] += np.round(step[ok & ~conv][:, 0]).astype(int)
        r[mv] += np.round(step[ok & ~conv][:, 1]).astype(int)
        s[mv] += np.round(step[ok & ~conv][:, 2]).astype(int)
        out = (s < 1) | (s > n_layers - 2) | (r < border) | (r >= h - border) | (c < border) | (c >= w - border)
        alive &= ~out
    keep = alive & done
    s, r, c, off = s[keep], r[keep], c[keep], off[keep]
    v = D[s, r, c]
    gx = 0.5 * (D[s, r, c + 1] - D[s, r, c - 1])
    gy = 0.5 * (D[s, r + 1, c] - D[s, r - 1, c])
    gs = 0.5 * (D[s + 1, r, c] - D[s - 1, r, c])
    value = v + 0.5 * (gx * off[:, 0] + gy * off[:, 1] + gs * off[:, 2])
    dxx = D[s, r, c + 1] + D[s, r, c - 1] - 2 * v
    dyy = D[s, r + 1, c] + D[s, r - 1, c] - 2 * v
    dxy = 0.25 * (D[s, r + 1, c + 1] - D[s, r + 1, c - 1] - D[s, r - 1, c + 1] + D[s, r - 1, c - 1])
    return s, r, c, off, value, (dxx, dyy, dxy)


def _orientation_peaks(hist: np.ndarray) -> list[float]:
    """Smoothed-histogram peaks >= 80% of the maximum, parabolically interpolated."""
    n = hist.size
    for _ in range(2):
        hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3.0
    hmax = hist.max()
    if hmax <= 0:
        return []
    left, right = np.roll(hist, 1), np.roll(hist, -1)
    peaks = np.nonzero((hist > left) & (hist > right) & (hist >= ORI_PEAK_RATIO * hmax))[0]
    out = []
    for b in peaks:
        l, m, r = left[b], hist[b], right[b]
        denom = l - 2 * m + r
        shift = 0.5 * (l - r) / denom if denom != 0 else 0.0
        out.append(((b + 0.5 + shift) * TWO_PI / n) % TWO_PI)
    return out


def _sift_orientations(mag, ori, x, y, sigma) -> list[float]:
    h, w = mag.shape
    radius = int(round(ORI_RADIUS_FACTOR * ORI_SIG_FACTOR * sigma))
    xi, yi = int(round(x)), int(round(y))
    x0, x1 = max(xi - radius, 1), min(xi + radius, w - 2)
    y0, y1 = max(yi - radius, 1), min(yi + radius, h - 2)
    if x1 < x0 or y1 < y0:
        return []
    m = mag[y0 : y1 + 1, x0 : x1 + 1]
    o = ori[y0 : y1 + 1, x0 : x1 + 1]
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    d2 = (xx - x) ** 2 + (yy - y) ** 2
    inside = d2 <= radius * radius
    wgt = np.exp(-d2 / (2.0 * (ORI_SIG_FACTOR * sigma) ** 2)) * m
    bins = np.floor(o * ORI_BINS / TWO_PI).astype(int) % ORI_BINS
    hist = np.bincount(bins[inside], weights=wgt[inside], minlength=ORI_BINS)
    return _orientation_peaks(hist)


class _SiftContext:
    """Per-octave gradient maps, computed lazily and shared between keypoints."""

    def __init__(self, ss: ScaleSpace):
        self.ss = ss
        self._grad: dict = {}

    def grad(self, octave: int, level: int):
        key = (octave, level)
        if key not in self._grad:
            self._grad[key] = _gradient_maps(self.ss.octaves[octave].gaussians[level])
        return self._grad[key]


def detect_sift(
    ss: ScaleSpace,
    contrast_thresh: float = 0.03,
    edge_thresh: float = 10.0,
    _ctx: Optional[_SiftContext] = None,
) -> list[Keypoint]:
    """DoG extrema passing the contrast and edge tests, one keypoint per dominant orientation.

    ``contrast_thresh`` is on the [0, 1] intensity scale and is divided by
    the number of scales per octave, as DoG amplitude shrinks with ``k - 1``.
    """
    ctx = _ctx or _SiftContext(ss)
    s_per = ss.scales_per_octave
    thr = contrast_thresh * 255.0 / s_per
    pre_thr = 0.5 * thr
    edge_lim = (edge_thresh + 1.0) ** 2 / edge_thresh
    raw = []
    for octv in ss.octaves:
        D = octv.dog
        if D.shape[0] < 3:
            raise InvalidInputError("scale space needs >= 3 DoG layers per octave")
        _, h, w = D.shape
        if h <= 2 * SIFT_BORDER or w <= 2 * SIFT_BORDER:
            continue
        mx = maximum_filter(D, size=3, mode="nearest")
        mn = minimum_filter(D, size=3, mode="nearest")
        ext = ((D == mx) | (D == mn)) & (np.abs(D) > pre_thr)
        ext[0] = ext[-1] = False
        ext[:, :SIFT_BORDER] = ext[:, h - SIFT_BORDER :] = False
        ext[:, :, :SIFT_BORDER] = ext[:, :, w - SIFT_BORDER :] = False
        cand = np.argwhere(ext)
        if cand.size == 0:
            continue
        s, r, c, off, value, (dxx, dyy, dxy) = _refine_extrema(D, cand, SIFT_BORDER)
        tr = dxx + dyy
        det = dxx * dyy - dxy * dxy
        good = (np.abs(value) >= thr) & (det > 0) & (tr * tr < edge_lim * det)
        f = octv.factor
        for i in np.nonzero(good)[0]:
            layer = s[i] + off[i, 2]
            raw.append(
                (
                    (c[i] + off[i, 0]),
                    (r[i] + off[i, 1]),
                    float(value[i]),
                    octv.index,
                    layer,
                    int(s[i]),
                    f,
                )
            )
    if not raw:
        return []
    xs = np.array([(t[0]) * t[6] for t in raw])
    ys = np.array([(t[1]) * t[6] for t in raw])
    resp = np.array([t[2] for t in raw])
    groups = [(t[3], t[5]) for t in raw]
    kps = []
    for i in _dedup(xs, ys, resp, groups):
        cx, cy, v, o, layer, si, f = raw[i]
        sigma_oct = ss.sigma0 * 2.0 ** (layer / s_per)
        mag, ori = ctx.grad(o, si)
        for theta in _sift_orientations(mag, ori, cx, cy, sigma_oct):
            kps.append(Keypoint(float(xs[i]), float(ys[i]), sigma_oct * f, theta, abs(v), Kind.SIFT, o, float(layer)))
    return _sorted(kps)


def _sorted(kps: Iterable[Keypoint]) -> list[Keypoint]:
    return sorted(kps, key=lambda k: (k.y, k.x, k.scale, k.orientation))


# --------------------------------------------------------------------------
# SIFT description


def describe_sift(kp: Keypoint, ss: ScaleSpace, _ctx: Optional[_SiftContext] = None) -> Optional[Descriptor]:
    """128-value gradient histogram in the keypoint frame.

    Returns None (keypoint dropped) when less than half of the rotated
    sampling window lies inside the octave raster.
    """
    ctx = _ctx or _SiftContext(ss)
    o = kp.octave
    octv = ss.octaves[o]
    level = int(min(max(round(kp.layer), 1), octv.gaussians.shape[0] - 2))
    mag, ori = ctx.grad(o, level)
    h, w = mag.shape
    f = octv.factor
    x, y = kp.x / f, kp.y / f
    sigma = kp.scale / f
    d, n = DESCR_WIDTH, DESCR_BINS
    hist_w = DESCR_SCALE_FACTOR * sigma
    radius = int(round(hist_w * math.sqrt(2.0) * (d + 1) * 0.5))
    cos_t, sin_t = math.cos(kp.orientation), math.sin(kp.orientation)
    xi, yi = int(round(x)), int(round(y))
    oy, ox = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    px, py = xi + ox, yi + oy
    fx, fy = px - x, py - y
    c_rot = (fx * cos_t + fy * sin_t) / hist_w
    r_rot = (-fx * sin_t + fy * cos_t) / hist_w
    rbin = r_rot + d / 2.0 - 0.5
    cbin = c_rot + d / 2.0 - 0.5
    in_win = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    in_img = (px >= 1) & (px < w - 1) & (py >= 1) & (py < h - 1)
    if in_win.sum() == 0 or (in_win & in_img).sum() < 0.5 * in_win.sum():
        return None
    sel = in_win & in_img
    rb, cb = rbin[sel], cbin[sel]
    m = mag[py[sel], px[sel]]
    ob = ((ori[py[sel], px[sel]] - kp.orientation) % TWO_PI) * (n / TWO_PI)
    wgt = np.exp(-(c_rot[sel] ** 2 + r_rot[sel] ** 2) / (0.5 * d * d)) * m

    r0, c0, o0 = np.floor(rb).astype(int), np.floor(cb).astype(int), np.floor(ob).astype(int)
    dr, dc, do = rb - r0, cb - c0, ob - o0
    hist = np.zeros((d + 2) * (d + 2) * n)
    for ir, wr in ((0, 1 - dr), (1, dr)):
        for ic, wc in ((0, 1 - dc), (1, dc)):
            for io, wo in ((0, 1 - do), (1, do)):
                idx = ((r0 + ir + 1) * (d + 2) + (c0 + ic + 1)) * n + (o0 + io) % n
                hist += np.bincount(idx, weights=wgt * wr * wc * wo, minlength=hist.size)
    vec = hist.reshape(d + 2, d + 2, n)[1:-1, 1:-1, :].ravel()
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        return None
    vec = np.minimum(vec / nrm, DESCR_MAG_THR)
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        return None
    return Descriptor(kp, vec / nrm)


# --------------------------------------------------------------------------
# SURF detection


def _grid_positions(n: int, step: int) -> np.ndarray:
    return np.arange(0, n, step)


def hessian_response(ii: IntegralImage, scale: int, step: int = 1) -> HessianResponse:
    """Approximate det(H) with SURF box filters of side ``scale`` (odd, >= 9)."""
    L = int(scale)
    if L < 9 or L % 2 == 0:
        raise InvalidInputError("filter size must be odd and >= 9")
    H, W = ii.height, ii.width
    if L > min(H, W):
        raise InvalidInputError(f"filter {L} larger than {W}x{H} image")
    b = (L - 1) // 2
    lobe = L // 3
    half = lobe // 2
    rows = _grid_positions(H, step)[:, None]
    cols = _grid_positions(W, step)[None, :]
    box = ii.box_sums

    def B(r0, c0, nr, nc):
        return box(c0, r0, c0 + nc, r0 + nr)

    dxx = B(rows - lobe + 1, cols - b, 2 * lobe - 1, L) - 3.0 * B(rows - lobe + 1, cols - half, 2 * lobe - 1, lobe)
    dyy = B(rows - b, cols - lobe + 1, L, 2 * lobe - 1) - 3.0 * B(rows - half, cols - lobe + 1, lobe, 2 * lobe - 1)
    dxy = (
        B(rows - lobe, cols + 1, lobe, lobe)
        + B(rows + 1, cols - lobe, lobe, lobe)
        - B(rows - lobe, cols - lobe, lobe, lobe)
        - B(rows + 1, cols + 1, lobe, lobe)
    )
    inv = 1.0 / (L * L)
    dxx, dyy, dxy = dxx * inv, dyy * inv, dxy * inv
    det = dxx * dyy - 0.81 * dxy * dxy
    valid = (rows - b >= 0) & (rows + b < H) & (cols - b >= 0) & (cols + b < W)
    det = np.where(valid, det, 0.0)
    return HessianResponse(L, step, det, (dxx + dyy) >= 0)


def surf_filter_sizes(octave: int, intervals: int = 4) -> list[int]:
    return [3 * ((2 ** (octave + 1)) * (i + 1) + 1) for i in range(intervals)]


def _haar(ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, size: np.ndarray | int):
    """Haar wavelet responses (right - left, bottom - top) of side ``size`` at integer points."""
    s = np.asarray(size, dtype=int)
    hs = s // 2
    box = ii.box_sums
    hx = box(xs, ys - hs, xs + hs, ys - hs + s) - box(xs - hs, ys - hs, xs, ys - hs + s)
    hy = box(xs - hs, ys, xs - hs + s, ys + hs) - box(xs - hs, ys - hs, xs - hs + s, ys)
    return hx, hy


def _haar_bilinear(ii: IntegralImage, px: np.ndarray, py: np.ndarray, size: int):
    """Haar responses at fractional pixel-centre positions.

    An even box at grid point x is centred on pixel coordinate x - 0.5, so the
    four grid points around (px + 0.5, py + 0.5) are blended bilinearly.
    """
    gx, gy = px + 0.5, py + 0.5
    x0, y0 = np.floor(gx).astype(int), np.floor(gy).astype(int)
    fx, fy = gx - x0, gy - y0
    hx = np.zeros_like(gx)
    hy = np.zeros_like(gx)
    for dx, dy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        a, b = _haar(ii, x0 + dx, y0 + dy, size)
        hx += w * a
        hy += w * b
    return hx, hy


_ORI_GRID = np.array([(i, j) for i in range(-6, 7) for j in range(-6, 7) if i * i + j * j < 36], dtype=float)
_ORI_WINDOWS = np.arange(0.0, TWO_PI, 0.15)


def surf_orientation(ii: IntegralImage, x: float, y: float, scale: float) -> float:
    """Dominant direction of Gaussian-weighted Haar responses in a sliding π/3 window."""
    s = scale
    xs = np.round(x + _ORI_GRID[:, 0] * s).astype(int)
    ys = np.round(y + _ORI_GRID[:, 1] * s).astype(int)
    size = max(2, 2 * int(round(2 * s)))
    hx, hy = _haar(ii, xs, ys, size)
    g = np.exp(-(_ORI_GRID ** 2).sum(1) / (2 * 2.5 ** 2))
    hx, hy = hx * g, hy * g
    ang = np.arctan2(hy, hx) % TWO_PI
    diff = (ang[None, :] - _ORI_WINDOWS[:, None]) % TWO_PI
    inwin = diff < math.pi / 3
    sx = inwin @ hx
    sy = inwin @ hy
    best = int(np.argmax(sx * sx + sy * sy))
    if sx[best] == 0 and sy[best] == 0:
        return 0.0
    return math.atan2(sy[best], sx[best]) % TWO_PI


def detect_surf(
    ii: IntegralImage,
    levels: int = 4,
    response_thresh: float = 0.0004,
    intervals: int = 4,
) -> list[Keypoint]:
    """Fast-Hessian keypoints: 3-D non-maximum suppression over position and scale.

    ``levels`` is the number of octaves; ``response_thresh`` is a det(H)
    threshold for intensities on the [0, 1] scale.
    """
    thr = response_thresh * 255.0 ** 2
    H, W = ii.height, ii.width
    found = []
    for o in range(levels):
        sizes = surf_filter_sizes(o, intervals)
        if sizes[-1] > min(H, W):
            break
        step = 2 ** o
        resp = [hessian_response(ii, L, step) for L in sizes]
        det = np.stack([r.det for r in resp])
        mx = maximum_filter(det, size=3, mode="constant", cval=0.0)
        peak = (det == mx) & (det > thr)
        peak[0] = peak[-1] = False
        peak[:, 0, :] = peak[:, -1, :] = False
        peak[:, :, 0] = peak[:, :, -1] = False
        filt_step = sizes[1] - sizes[0]
        for li, ri, ci in np.argwhere(peak):
            # quadratic interpolation in (x, y, size)
            v = det[li, ri, ci]
            g = 0.5 * np.array(
                [
                    det[li, ri, ci + 1] - det[li, ri, ci - 1],
                    det[li, ri + 1, ci] - det[li, ri - 1, ci],
                    det[li + 1, ri, ci] - det[li - 1, ri, ci],
                ]
            )
            dxx = det[li, ri, ci + 1] + det[li, ri, ci - 1] - 2 * v
            dyy = det[li, ri + 1, ci] + det[li, ri - 1, ci] - 2 * v
            dss = det[li + 1, ri, ci] + det[li - 1, ri, ci] - 2 * v
            dxy = 0.25 * (det[li, ri + 1, ci + 1] - det[li, ri + 1, ci - 1] - det[li, ri - 1, ci + 1] + det[li, ri - 1, ci - 1])
            dxs = 0.25 * (det[li + 1, ri, ci + 1] - det[li + 1, ri, ci - 1] - det[li - 1, ri, ci + 1] + det[li - 1, ri, ci - 1])
            dys = 0.25 * (det[li + 1, ri + 1, ci] - det[li + 1, ri - 1, ci] - det[li - 1, ri + 1, ci] + det[li - 1, ri - 1, ci])
            Hm = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
            try:
                off = -np.linalg.solve(Hm, g)
            except np.linalg.LinAlgError:
                continue
            if np.any(np.abs(off) >= 0.5):
                continue
            x = (ci + off[0]) * step
            y = (ri + off[1]) * step
            size = sizes[li] + off[2] * filt_step
            if not (0 <= x <= W - 1 and 0 <= y <= H - 1):
                continue
            found.append((x, y, 1.2 * size / 9.0, float(v), o, li))
    if not found:
        return []
    xs = np.array([f[0] for f in found])
    ys = np.array([f[1] for f in found])
    resp = np.array([f[3] for f in found])
    groups = [(f[4], f[5]) for f in found]
    kps = []
    for i in _dedup(xs, ys, resp, groups):
        x, y, s, v, o, li = found[i]
        theta = surf_orientation(ii, x, y, s)
        kps.append(Keypoint(float(x), float(y), float(s), theta, v, Kind.LPSD, o, float(li)))
    return _sorted(kps)


# --------------------------------------------------------------------------
# LPSD description

_n_rho = LPSD_RADIAL * LPSD_SUBSAMPLES
_n_phi = LPSD_ANGULAR * LPSD_SUBSAMPLES
_RHO_T = (np.arange(_n_rho) + 0.5) / _n_rho  # position along log-radius in (0, 1)
_PHI_T = (np.arange(_n_phi) + 0.5) / _n_phi
_CELL = (
    (np.arange(_n_rho)[:, None] // LPSD_SUBSAMPLES) * LPSD_ANGULAR + (np.arange(_n_phi)[None, :] // LPSD_SUBSAMPLES)
).ravel()


def describe_lpsd(kp: Keypoint, img: GrayImage | None = None, ii: IntegralImage | None = None) -> Optional[Descriptor]:
    """SURF-style Haar sums on a log-polar grid around the keypoint.

    The disk of radius ``10 * scale`` is resampled on 16 log-spaced radii by
    16 angles starting at the keypoint orientation. Haar responses are split
    into radial and tangential components; each of the 4x4 log-polar cells
    contributes (sum d_r, sum d_t, sum |d_r|, sum |d_t|). Returns None when
    no sample falls inside the image.
    """
    if ii is None:
        if img is None:
            raise InvalidInputError("describe_lpsd needs an image or an integral image")
        ii = integral(img)
    s = kp.scale
    R = LPSD_SUPPORT * s
    r0 = LPSD_INNER * s
    rho = r0 * (R / r0) ** _RHO_T
    phi = kp.orientation + TWO_PI * _PHI_T
    cos_p, sin_p = np.cos(phi), np.sin(phi)
    px = kp.x + rho[:, None] * cos_p[None, :]
    py = kp.y + rho[:, None] * sin_p[None, :]
    px, py = px.ravel(), py.ravel()
    inside = (px > -0.5) & (px < ii.width - 0.5) & (py > -0.5) & (py < ii.height - 0.5)
    if not inside.any():
        return None
    size = max(2, 2 * int(round(s)))
    hx, hy = _haar_bilinear(ii, px, py, size)
    cp = np.broadcast_to(cos_p[None, :], (_n_rho, _n_phi)).ravel()
    sp = np.broadcast_to(sin_p[None, :], (_n_rho, _n_phi)).ravel()
    d_r = np.where(inside, hx * cp + hy * sp, 0.0)
    d_t = np.where(inside, -hx * sp + hy * cp, 0.0)
    n_cells = LPSD_RADIAL * LPSD_ANGULAR
    vec = np.stack(
        [
            np.bincount(_CELL, d_r, n_cells),
            np.bincount(_CELL, d_t, n_cells),
            np.bincount(_CELL, np.abs(d_r), n_cells),
            np.bincount(_CELL, np.abs(d_t), n_cells),
        ],
        axis=1,
    ).ravel()
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        return None
    return Descriptor(kp, vec / nrm)


# --------------------------------------------------------------------------


def extract_sift(img: GrayImage, cfg: Config | None = None) -> list[Descriptor]:
    cfg = cfg or Config()
    p = cfg.sift
    try:
        ss = build_scale_space(img, p.octaves, p.scales, p.sigma, upsample=p.upsample)
    except InvalidInputError:
        return []
    ctx = _SiftContext(ss)
    out = []
    for kp in detect_sift(ss, p.contrast, p.edge, _ctx=ctx):
        d = describe_sift(kp, ss, _ctx=ctx)
        if d is not None:
            out.append(d)
    return out


def extract_lpsd(img: GrayImage, cfg: Config | None = None) -> list[Descriptor]:
    cfg = cfg or Config()
    ii = integral(img)
    out = []
    for kp in detect_surf(ii, cfg.surf.octaves, cfg.surf.threshold, cfg.surf.intervals):
        d = describe_lpsd(kp, ii=ii)
        if d is not None:
            out.append(d)
    return out


def extract_all(img: GrayImage, cfg: Config | None = None) -> tuple[list[Descriptor], list[Descriptor]]:
    """SIFT and LPSD descriptors of the whole image, as two separate lists."""
    return extract_sift(img, cfg), extract_lpsd(img, cfg)


def descriptor_matrix(descs: list[Descriptor]) -> np.ndarray:
    if not descs:
        return np.zeros((0, 0))
    return np.stack([d.vector for d in descs])
