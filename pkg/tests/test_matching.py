import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmfd.config import Config
from cmfd.errors import InvalidInputError
from cmfd.keypoint import Descriptor, Keypoint, Kind
from cmfd.matching import (
    accepted_prefix,
    distance_row,
    g2nn_match,
    match_both,
    match_with_config,
)


def _descs(vectors, kind=Kind.SIFT):
    out = []
    for n, v in enumerate(vectors):
        kp = Keypoint(float(10 * n), float(3 * n + 1), 1.6, 0.0, 1.0, kind)
        out.append(Descriptor(kp, np.asarray(v, dtype=float)))
    return out


def _oracle(vectors, T, max_neighbors=10):
    """Literal prefix-ratio rule on a brute-force sorted row, as unordered index pairs."""
    X = np.asarray(vectors, dtype=float)
    n = len(X)
    pairs = set()
    for i in range(n):
        row = sorted((float(((X[j] - X[i]) ** 2).sum()), j) for j in range(n) if j != i)[:max_neighbors]
        for j in range(len(row) - 1):
            num, den = row[j][0], row[j + 1][0]
            ratio = 0.0 if num == 0 else (num / den if den > 0 else math.inf)
            if ratio > T:
                break
            pairs.add(tuple(sorted((i, row[j][1]))))
    return pairs


def _got(pairs):
    return {(p.i, p.j) for p in pairs}


# -- distance_row --------------------------------------------------------------


def test_distance_row_unit_basis():
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    r = distance_row(0, _descs([e1, e2, e1]))
    assert r.d2.tolist() == [0.0, 2.0]
    assert r.index.tolist() == [2, 1]


def test_distance_row_matches_brute_force():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(10, 6))
    descs = _descs(X)
    for i in range(10):
        r = distance_row(i, descs, max_neighbors=20)
        ref = sorted((float(((X[j] - X[i]) ** 2).sum()), j) for j in range(10) if j != i)
        assert r.index.tolist() == [j for _, j in ref]
        assert np.allclose(r.d2, [d for d, _ in ref])
        assert np.all(np.diff(r.d2) >= 0)
        assert r.d2[0] <= r.d2.min()


def test_distance_row_truncates_and_rejects_singleton():
    descs = _descs(np.eye(6))
    assert len(distance_row(0, descs, max_neighbors=3).d2) == 3
    with pytest.raises(InvalidInputError):
        distance_row(0, descs[:1])


def test_mixed_kinds_rejected():
    a = _descs([[1.0, 0.0]], Kind.SIFT) + _descs([[0.0, 1.0]], Kind.LPSD)
    with pytest.raises(InvalidInputError):
        distance_row(0, a)


# -- prefix rule ---------------------------------------------------------------


def test_prefix_stops_at_first_excess():
    assert accepted_prefix(np.array([1.0, 4.0, 9.0, 10.1]), 0.6) == 2


def test_prefix_runs_through_small_ratios():
    # 0.25, 0.444, 0.0009 all pass; the final entry has no successor
    assert accepted_prefix(np.array([1.0, 4.0, 9.0, 10000.0]), 0.6) == 3


def test_prefix_first_ratio_too_large():
    assert accepted_prefix(np.array([4.0, 5.0, 50.0]), 0.6) == 0


def test_prefix_zero_over_zero_counts_as_match():
    assert accepted_prefix(np.array([0.0, 0.0, 7.0]), 0.1) == 2


def test_three_identical_one_distant():
    v = [1.0, 0.0, 0.0]
    pairs = g2nn_match(_descs([v, v, v, [0.0, 0.0, 9.0]]), 0.6)
    assert _got(pairs) == {(0, 1), (0, 2), (1, 2)}
    assert _got(pairs) == _oracle([v, v, v, [0.0, 0.0, 9.0]], 0.6)


def test_bad_threshold_and_tiny_sets():
    with pytest.raises(InvalidInputError):
        g2nn_match(_descs(np.eye(3)), 1.0)
    with pytest.raises(InvalidInputError):
        g2nn_match(_descs(np.eye(3)), 0.0)
    assert g2nn_match([], 0.6) == []
    assert g2nn_match(_descs([[1.0, 2.0]]), 0.6) == []


# -- oracle and properties -----------------------------------------------------

vec_sets = st.integers(2, 12).flatmap(
    lambda n: st.lists(
        st.lists(st.integers(-3, 3).map(float), min_size=4, max_size=4), min_size=n, max_size=n
    )
)


@settings(max_examples=150, deadline=None)
@given(vec_sets, st.sampled_from([0.1, 0.3, 0.6, 0.9]))
def test_g2nn_equals_exhaustive_oracle(vectors, T):
    # small integer grids produce many ties and exact duplicates
    pairs = g2nn_match(_descs(vectors), T)
    assert _got(pairs) == _oracle(vectors, T)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 60), st.integers(1, 5))
def test_g2nn_oracle_with_candidate_pool(seed, n, k):
    # n >> max_neighbors exercises the partial candidate search
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 8))
    X[: n // 4] = X[n // 4 : 2 * (n // 4)] + rng.normal(scale=0.05, size=(n // 4, 8))
    assert _got(g2nn_match(_descs(X), 0.5, max_neighbors=k)) == _oracle(X, 0.5, k)


@settings(max_examples=80, deadline=None)
@given(vec_sets, st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_g2nn_monotone_in_threshold(vectors, t1, t2):
    lo, hi = sorted((t1, t2))
    descs = _descs(vectors)
    assert _got(g2nn_match(descs, lo)) <= _got(g2nn_match(descs, hi))


@settings(max_examples=80, deadline=None)
@given(vec_sets, st.floats(0.05, 0.95))
def test_no_self_or_duplicate_pairs(vectors, T):
    pairs = g2nn_match(_descs(vectors), T)
    keys = [(p.i, p.j) for p in pairs]
    assert len(keys) == len(set(keys))
    for p in pairs:
        assert p.i < p.j
        assert p.a != p.b
        assert p.d2 >= 0


def test_same_location_pairs_dropped():
    # two orientations at one keypoint location are not a copy-move match
    kp = Keypoint(5.0, 5.0, 1.6, 0.0, 1.0, Kind.SIFT)
    kp2 = Keypoint(5.0, 5.0, 1.6, 1.0, 1.0, Kind.SIFT)
    far = Keypoint(90.0, 5.0, 1.6, 0.0, 1.0, Kind.SIFT)
    v = np.array([1.0, 0.0])
    descs = [Descriptor(kp, v), Descriptor(kp2, v), Descriptor(far, np.array([0.0, 5.0]))]
    assert g2nn_match(descs, 0.6) == []


# -- match_both ----------------------------------------------------------------


def test_match_both_with_empty_lpsd_equals_sift():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(20, 5))
    X[10:] = X[:10] + 1e-3
    sift = _descs(X)
    assert match_both(sift, []) == g2nn_match(sift, 0.6)


def test_match_both_union_and_kinds():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(16, 5))
    X[8:] = X[:8] + 1e-3
    sift, lpsd = _descs(X, Kind.SIFT), _descs(X[::-1], Kind.LPSD)
    both = match_both(sift, lpsd)
    s, l_ = g2nn_match(sift, 0.6), g2nn_match(lpsd, 0.1)
    assert len(both) == len(s) + len(l_)
    assert len(both) >= max(len(s), len(l_))
    assert {p.kind for p in both} == {Kind.SIFT, Kind.LPSD}


def test_config_thresholds_are_defaults():
    g = Config().g2nn
    assert (g.t_sift, g.t_lpsd) == (0.6, 0.1)
    # a ratio of 0.2 passes SIFT's 0.6 but not LPSD's 0.1
    X = [[0.0, 0.0], [1.0, 0.0], [0.0, math.sqrt(5.0)]]
    assert len(match_with_config(_descs(X, Kind.SIFT), [], Config())) > 0
    assert match_with_config([], _descs(X, Kind.LPSD), Config()) == []


def test_match_json_line():
    p = g2nn_match(_descs([[1.0, 0.0], [1.0, 0.0], [0.0, 9.0]]), 0.6)[0]
    d = json.loads(p.to_json())
    assert set(d) == {"ax", "ay", "bx", "by", "kind", "d2"}
    assert d["kind"] == "SIFT"
