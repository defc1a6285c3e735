"""Spatial-distance filtering and iterated RANSAC over affine models."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import Config
from .errors import InvalidInputError
from .matching import MatchPair

MIN_DET = 1e-6
# reject minimal samples whose source triangle is (nearly) collinear
MIN_TRIANGLE_AREA = 4.0
REFIT_ROUNDS = 3
_HYP_CHUNK = 2048


@dataclass(frozen=True)
class AffineModel:
    linear: np.ndarray  # (2, 2)
    translation: np.ndarray  # (2,)

    def __post_init__(self):
        A = np.asarray(self.linear, dtype=float).reshape(2, 2)
        t = np.asarray(self.translation, dtype=float).reshape(2)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(t))):
            raise InvalidInputError("affine model has non-finite entries")
        if abs(np.linalg.det(A)) <= MIN_DET:
            raise InvalidInputError("affine linear part is singular")
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "translation", t)

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.linear.T + self.translation

    @property
    def scale(self) -> float:
        return float(np.sqrt(abs(np.linalg.det(self.linear))))

    def as_list(self) -> list[list[float]]:
        return [list(map(float, self.linear[0])) + [float(self.translation[0])],
                list(map(float, self.linear[1])) + [float(self.translation[1])]]


@dataclass(frozen=True)
class InlierGroup:
    model: AffineModel
    pairs: list  # list[MatchPair], each oriented so model(a) ~ b


def spatial_filter(pairs: Sequence[MatchPair], S: float = 50.0) -> list[MatchPair]:
    """Drop pairs whose endpoints are closer than ``S`` pixels."""
    if S <= 0:
        raise InvalidInputError("S must be positive")
    out = []
    for p in pairs:
        if np.hypot(p.a[0] - p.b[0], p.a[1] - p.b[1]) >= S:
            out.append(p)
    return out


def fit_affine(src: np.ndarray, dst: np.ndarray) -> AffineModel:
    """Least-squares affine with ``dst ~ src @ A.T + t``; needs >= 3 non-collinear points."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    if len(src) < 3:
        raise InvalidInputError("need >= 3 correspondences")
    M = np.hstack([src, np.ones((len(src), 1))])
    sol, *_ = np.linalg.lstsq(M, dst, rcond=None)
    return AffineModel(sol[:2].T, sol[2])


def _hypotheses(P, Q, triples, flips):
    """Batched exact affine fits for minimal samples; returns (A, t, ok)."""
    src = P[triples].copy()
    dst = Q[triples].copy()
    f = flips.astype(bool)
    src[f], dst[f] = Q[triples][f], P[triples][f]
    S = np.concatenate([src, np.ones(src.shape[:2] + (1,))], axis=2)
    det = np.linalg.det(S)
    ok = np.abs(det) > 2.0 * MIN_TRIANGLE_AREA
    sol = np.zeros((len(triples), 3, 2))
    if ok.any():
        sol[ok] = np.linalg.solve(S[ok], dst[ok])
    A = np.transpose(sol[:, :2, :], (0, 2, 1))
    t = sol[:, 2, :]
    ok &= np.abs(np.linalg.det(A)) > MIN_DET
    ok &= np.all(np.isfinite(sol.reshape(len(sol), -1)), axis=1)
    return A, t, ok


def _residuals(A, t, P, Q):
    """Forward ||A p + t - q|| and flipped ||A q + t - p|| for every hypothesis x pair."""
    fwd = np.linalg.norm(np.einsum("hij,nj->hni", A, P) + t[:, None, :] - Q[None], axis=2)
    bwd = np.linalg.norm(np.einsum("hij,nj->hni", A, Q) + t[:, None, :] - P[None], axis=2)
    return fwd, bwd


def _consensus(model: AffineModel, P, Q, eps):
    fwd = np.linalg.norm(model.apply(P) - Q, axis=1)
    bwd = np.linalg.norm(model.apply(Q) - P, axis=1)
    flip = bwd < fwd
    res = np.where(flip, bwd, fwd)
    return res <= eps, flip, res


def _best_group(P, Q, eps, max_rounds, rng):
    n = len(P)
    # every triple is tried with four relative orientations; the fourth
    # global flip is the inverse model and is covered by the flipped test
    flip_patterns = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    triples = np.stack([rng.choice(n, 3, replace=False) for _ in range(max_rounds)]) if n < 64 else None
    if triples is None:
        triples = rng.integers(0, n, size=(max_rounds, 3))
        dup = (triples[:, 0] == triples[:, 1]) | (triples[:, 0] == triples[:, 2]) | (triples[:, 1] == triples[:, 2])
        triples = triples[~dup]
    triples = np.repeat(triples, 4, axis=0)
    flips = np.tile(flip_patterns, (len(triples) // 4, 1))

    best = (-1, np.inf, None)
    for start in range(0, len(triples), _HYP_CHUNK):
        A, t, ok = _hypotheses(P, Q, triples[start : start + _HYP_CHUNK], flips[start : start + _HYP_CHUNK])
        if not ok.any():
            continue
        A, t = A[ok], t[ok]
        fwd, bwd = _residuals(A, t, P, Q)
        res = np.minimum(fwd, bwd)
        inl = res <= eps
        counts = inl.sum(1)
        cost = np.where(inl, res, 0.0).sum(1)
        h = int(np.lexsort((cost, -counts))[0])
        if counts[h] > best[0] or (counts[h] == best[0] and cost[h] < best[1]):
            best = (int(counts[h]), float(cost[h]), (A[h], t[h]))
    if best[2] is None:
        return None
    model = AffineModel(*best[2])
    inl, flip, _ = _consensus(model, P, Q, eps)
    for _ in range(REFIT_ROUNDS):
        src = np.where(flip[:, None], Q, P)[inl]
        dst = np.where(flip[:, None], P, Q)[inl]
        try:
            cand = fit_affine(src, dst)
        except InvalidInputError:
            break
        c_inl, c_flip, _ = _consensus(cand, P, Q, eps)
        if c_inl.sum() < inl.sum():
            break
        model, inl, flip = cand, c_inl, c_flip
    return model, inl, flip


def distinct_support(P, Q, mask) -> int:
    """Number of distinct unordered endpoint locations (1 px grid) among masked pairs.

    Keypoints spawned at one location with several orientations or scales
    describe the same correspondence and are counted once.
    """
    a = np.round(P[mask]).astype(np.int64)
    b = np.round(Q[mask]).astype(np.int64)
    lo = np.where((a[:, :1] < b[:, :1]) | ((a[:, :1] == b[:, :1]) & (a[:, 1:] <= b[:, 1:])), a, b)
    hi = np.where(lo == a, b, a)
    return len({tuple(r) for r in np.hstack([lo, hi])})


def ransac_iterate(
    pairs: Sequence[MatchPair],
    N: int = 6,
    epsilon: float = 3.0,
    max_rounds: int = 2000,
    seed: int = 42,
) -> list[InlierGroup]:
    """Extract affine inlier groups until the best consensus has fewer than ``N`` pairs.

    A pair is an inlier if either orientation fits the model within
    ``epsilon``; stored pairs are oriented so ``model(a) ~ b``. The group
    size compared against ``N`` counts distinct endpoint locations.
    """
    if N < 3 or epsilon <= 0:
        raise InvalidInputError("need N >= 3 and epsilon > 0")
    rng = np.random.default_rng(seed)
    remaining = list(pairs)
    groups = []
    while len(remaining) >= 3:
        P = np.array([p.a for p in remaining], float)
        Q = np.array([p.b for p in remaining], float)
        found = _best_group(P, Q, epsilon, max_rounds, rng)
        if found is None:
            break
        model, inl, flip = found
        if distinct_support(P, Q, inl) < N:
            break
        members = []
        for k in np.nonzero(inl)[0]:
            p = remaining[k]
            if flip[k]:
                p = replace(p, a=p.b, b=p.a)
            members.append(replace(p, model=model))
        groups.append(InlierGroup(model, members))
        remaining = [p for k, p in enumerate(remaining) if not inl[k]]
    return groups


def filter_matches(pairs: Sequence[MatchPair], cfg: Config | None = None) -> list[MatchPair]:
    """Spatial filter, then iterated RANSAC; returns all inlier-group pairs."""
    cfg = cfg or Config()
    kept = spatial_filter(pairs, cfg.spatial.s)
    r = cfg.ransac
    groups = ransac_iterate(kept, r.n, r.epsilon, r.max_rounds, r.seed)
    return [p for g in groups for p in g.pairs]
