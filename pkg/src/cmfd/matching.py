"""Generalised 2-nearest-neighbour (g2NN) matching inside one descriptor family."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import Config
from .errors import InvalidInputError
from .keypoint import Descriptor, Kind, descriptor_matrix

DEFAULT_MAX_NEIGHBORS = 10
_ROW_CHUNK = 1024


@dataclass(frozen=True)
class DistanceRow:
    origin: int
    d2: np.ndarray  # ascending squared distances
    index: np.ndarray  # descriptor index of each entry


@dataclass(frozen=True)
class MatchPair:
    a: tuple[float, float]
    b: tuple[float, float]
    kind: Kind
    d2: float
    i: int = -1
    j: int = -1
    model: Optional[object] = None  # AffineModel mapping a onto b, set by geofilter

    def to_json(self) -> str:
        return json.dumps(
            {"ax": self.a[0], "ay": self.a[1], "bx": self.b[0], "by": self.b[1], "kind": self.kind.value, "d2": self.d2}
        )

    def key(self) -> tuple:
        """Orientation-free identity of the pair."""
        return (self.kind.value,) + tuple(sorted((self.a, self.b)))


MatchSet = list  # list[MatchPair], canonically sorted


def _vectors(descs: Sequence[Descriptor]) -> np.ndarray:
    X = descriptor_matrix(list(descs))
    kinds = {d.keypoint.kind for d in descs}
    if len(kinds) > 1:
        raise InvalidInputError("descriptors of different kinds cannot be matched together")
    return X


def distance_row(i: int, descs: Sequence[Descriptor], max_neighbors: int = DEFAULT_MAX_NEIGHBORS) -> DistanceRow:
    """Squared distances from descriptor ``i`` to all others, ascending, truncated."""
    if len(descs) < 2:
        raise InvalidInputError("need at least two descriptors")
    X = _vectors(descs)
    d2 = ((X - X[i]) ** 2).sum(axis=1)
    idx = np.delete(np.arange(len(descs)), i)
    d2 = d2[idx]
    order = np.lexsort((idx, d2))[:max_neighbors]
    return DistanceRow(i, d2[order], idx[order])


def _rows(X: np.ndarray, max_neighbors: int):
    """Yield (i, d2, idx) for every row; candidates found by BLAS, distances recomputed exactly."""
    n = X.shape[0]
    sq = (X * X).sum(1)
    k = min(max_neighbors, n - 1)
    pool = min(n - 1, k + 8)
    for start in range(0, n, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n)
        block = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        block[np.arange(stop - start), np.arange(start, stop)] = np.inf
        if pool < n - 1:
            cand = np.argpartition(block, pool - 1, axis=1)[:, :pool]
        else:
            cand = np.argsort(block, axis=1)[:, :pool]
        for r in range(stop - start):
            i = start + r
            c = cand[r]
            c = c[c != i]
            d2 = ((X[c] - X[i]) ** 2).sum(1)
            order = np.lexsort((c, d2))[:k]
            yield i, d2[order], c[order]


def accepted_prefix(d2: np.ndarray, T: float) -> int:
    """Number of leading candidates kept by the g2NN prefix-ratio rule.

    Candidate ``j`` is kept while ``d2[j] / d2[j + 1] <= T`` for every earlier
    ratio; the last entry of a row has no successor and is never kept. A
    ``0 / 0`` ratio counts as 0.
    """
    n = 0
    for j in range(len(d2) - 1):
        num, den = d2[j], d2[j + 1]
        ratio = 0.0 if num == 0 else (num / den if den > 0 else np.inf)
        if ratio > T:
            break
        n += 1
    return n


def g2nn_match(
    descs: Sequence[Descriptor], T: float, max_neighbors: int = DEFAULT_MAX_NEIGHBORS
) -> list[MatchPair]:
    if not 0 < T < 1:
        raise InvalidInputError("ratio threshold must lie in (0, 1)")
    if len(descs) < 2:
        return []
    X = _vectors(descs)
    seen = set()
    out = []
    for i, d2, idx in _rows(X, max_neighbors):
        for j_pos in range(accepted_prefix(d2, T)):
            j = int(idx[j_pos])
            lo, hi = min(i, j), max(i, j)
            if (lo, hi) in seen:
                continue
            seen.add((lo, hi))
            ka, kb = descs[lo].keypoint, descs[hi].keypoint
            a, b = (ka.x, ka.y), (kb.x, kb.y)
            if a == b:
                continue
            out.append(MatchPair(a, b, ka.kind, float(d2[j_pos]), lo, hi))
    return _canonical(out)


def _canonical(pairs) -> list[MatchPair]:
    return sorted(pairs, key=lambda p: (p.kind.value, p.i, p.j, p.a, p.b))


def match_both(
    sift: Sequence[Descriptor],
    lpsd: Sequence[Descriptor],
    T_SIFT: float = 0.6,
    T_LPSD: float = 0.1,
    max_neighbors: int = DEFAULT_MAX_NEIGHBORS,
) -> list[MatchPair]:
    """Union of per-family g2NN matches; families are never cross-matched."""
    return _canonical(g2nn_match(sift, T_SIFT, max_neighbors) + g2nn_match(lpsd, T_LPSD, max_neighbors))


def match_with_config(sift, lpsd, cfg: Config) -> list[MatchPair]:
    g = cfg.g2nn
    return match_both(sift, lpsd, g.t_sift, g.t_lpsd, g.max_neighbors)
