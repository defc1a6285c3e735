import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter, rotate

from cmfd.blockfeat import (
    DctLambda,
    PcetFeature,
    adaptive_thresholds,
    block_lambda,
    compute_dct_lambda,
    compute_pcet,
    domain_feature,
    domains_match,
    feature_distance,
    sigma_s,
)
from cmfd.errors import InvalidInputError
from cmfd.imgcore import GrayImage, sample_disk


def _field(seed, size=81, blur=2.0):
    rng = np.random.default_rng(seed)
    f = gaussian_filter(rng.uniform(0, 255, (size, size)), blur)
    return (f - f.min()) / (f.max() - f.min()) * 255


def _pcet(a, r, center=(40, 40)):
    return compute_pcet(sample_disk(GrayImage(a), center, r)).magnitudes


def _pcet_oracle(a, center, r, max_order=3):
    """Direct double loop over disk pixels."""
    cx, cy = center
    pts = [(x - cx, y - cy) for y in range(a.shape[0]) for x in range(a.shape[1]) if (x - cx) ** 2 + (y - cy) ** 2 <= r * r]
    dA = math.pi / len(pts)
    out = []
    for n in range(max_order + 1):
        for l in range(max_order + 1):
            acc = 0j
            for dx, dy in pts:
                rho = math.hypot(dx, dy) / r
                if l and rho == 0:
                    continue
                acc += a[cy + dy, cx + dx] * np.exp(-2j * math.pi * n * rho * rho) * np.exp(-1j * l * math.atan2(dy, dx))
            out.append(abs(acc * dA / math.pi))
    return np.array(out)


def _dct_matrix(n):
    C = np.array([[math.cos(math.pi * (2 * j + 1) * k / (2 * n)) for j in range(n)] for k in range(n)])
    C[0] *= math.sqrt(1 / n)
    C[1:] *= math.sqrt(2 / n)
    return C


# -- PCET ----------------------------------------------------------------------


@pytest.mark.parametrize("r", [15, 20, 37.5])
def test_pcet_constant_disk(r):
    c = 137.0
    f = _pcet(np.full((81, 81), c), r)
    assert f[0] == pytest.approx(c, rel=1e-2)
    assert np.max(f[1:]) <= 1e-2 * c


def test_pcet_matches_direct_loop():
    a = _field(0, size=31)
    assert np.allclose(_pcet(a, 9, (15, 15)), _pcet_oracle(a, (15, 15), 9), rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("r", [3, 10, 20])
def test_pcet_quarter_turns_exact(r):
    a = _field(1)
    f0 = _pcet(a, r)
    for k in (1, 2, 3):
        assert np.linalg.norm(_pcet(np.rot90(a, k).copy(), r) - f0) <= 1e-9 * np.linalg.norm(f0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(15, 37.5), st.integers(1, 11))
def test_pcet_rotation_multiples_of_30(seed, r, k):
    a = _field(seed)
    b = np.clip(rotate(a, 30 * k, reshape=False, order=1, mode="nearest"), 0, 255)
    f0, f1 = _pcet(a, r), _pcet(b, r)
    assert np.linalg.norm(f1 - f0) <= 0.02 * np.linalg.norm(f0)


def test_pcet_offset_changes_only_m00():
    a = _field(2) * 0.8
    f0, f1 = _pcet(a, 20), _pcet(a + 10, 20)
    assert f1[0] != pytest.approx(f0[0])
    assert np.allclose(f1[1:], f0[1:], atol=1e-2)


def test_pcet_degenerate_disk():
    with pytest.raises(InvalidInputError):
        compute_pcet(sample_disk(GrayImage(np.zeros((5, 5))), (0, 0), 1.0))
    with pytest.raises(InvalidInputError):
        compute_pcet(sample_disk(GrayImage(np.zeros((9, 9))), (4, 4), 3), max_order=-1)


def test_pcet_feature_shape_and_finite():
    f = compute_pcet(sample_disk(GrayImage(_field(3)), (40, 40), 12))
    assert f.magnitudes.shape == (16,)
    assert np.all(np.isfinite(f.magnitudes)) and np.all(f.magnitudes >= 0)


# -- DCT lambda ----------------------------------------------------------------


@pytest.mark.parametrize("c", [0.0, 1.0, 110.0, 255.0])
def test_lambda_constant_3x3(c):
    d = compute_dct_lambda(GrayImage(np.full((9, 9), c)), (4, 4), 1.5)
    assert d.lam == pytest.approx(3 * c, abs=1e-9)
    assert d.variance == pytest.approx(0.0, abs=1e-9)


def test_lambda_matches_explicit_dct_svd():
    a = _field(4, size=41)
    r = 7.5
    d = compute_dct_lambda(GrayImage(a), (20, 20), r)
    n = 7
    yy, xx = np.mgrid[-n : n + 1, -n : n + 1]
    block = np.where(xx**2 + yy**2 <= r * r, a[20 - n : 21 + n, 20 - n : 21 + n], 0.0)
    C = _dct_matrix(2 * n + 1)
    F = C @ block @ C.T
    assert d.lam == pytest.approx(math.sqrt(np.linalg.eigvalsh(F.T @ F).max()), rel=1e-9)
    assert d.variance == pytest.approx(a[20 - n : 21 + n, 20 - n : 21 + n][xx**2 + yy**2 <= r * r].var())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1, 15))
def test_lambda_transpose_invariant(seed, r):
    a = _field(seed, size=33)
    assert compute_dct_lambda(GrayImage(a), (16, 16), r).lam == pytest.approx(
        compute_dct_lambda(GrayImage(a.T.copy()), (16, 16), r).lam, rel=1e-9
    )


def test_lambda_clipped_at_border_and_errors():
    a = np.full((10, 10), 50.0)
    d = compute_dct_lambda(GrayImage(a), (0, 0), 3)
    assert d.lam > 0
    with pytest.raises(InvalidInputError):
        compute_dct_lambda(GrayImage(a), (30, 30), 3)
    with pytest.raises(InvalidInputError):
        compute_dct_lambda(GrayImage(a), (5, 5), 0.5)


def test_lambda_small_rotation_drift():
    a = _field(5)
    l0 = compute_dct_lambda(GrayImage(a), (40, 40), 19).lam
    b = np.clip(rotate(a, 15, reshape=False, order=1, mode="nearest"), 0, 255)
    assert abs(compute_dct_lambda(GrayImage(b), (40, 40), 19).lam - l0) <= 0.05 * l0


# -- thresholds ----------------------------------------------------------------


@pytest.mark.parametrize(
    "s, k_pcet, k_dct",
    [
        (0.0, 1, 25),
        (0.05, 1, 25),
        (0.1, 1, 25),
        (np.nextafter(0.1, 1), 25, 25),
        (0.5, 25, 25),
        (1.0, 25, 25),
        (np.nextafter(1.0, 2), 75, 50),
        (5.0, 75, 50),
        (10.0, 75, 50),
        (np.nextafter(10.0, 11), 75, 100),
        (20.0, 75, 100),
        (1e9, 75, 100),
    ],
)
def test_threshold_branch_table(s, k_pcet, k_dct):
    assert adaptive_thresholds(float(s)) == (k_pcet, k_dct)


def test_threshold_rejects_negative_and_nan():
    for bad in (-1e-12, float("nan")):
        with pytest.raises(InvalidInputError):
            adaptive_thresholds(bad)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_thresholds_monotone_step(a, b):
    lo, hi = sorted((a, b))
    p1, d1 = adaptive_thresholds(lo)
    p2, d2 = adaptive_thresholds(hi)
    assert p1 <= p2 and d1 <= d2


def test_sigma_s_scaling():
    a, b = DctLambda(1.0, 100.0), DctLambda(1.0, 40.0)
    assert sigma_s(a, b) == pytest.approx(60.0)
    assert sigma_s(a, b, 255.0) == pytest.approx(60.0 / 255**2)


# -- domains_match -------------------------------------------------------------


def test_domains_match_examples():
    assert domains_match(DctLambda(100.0, 0.0), DctLambda(112.0, 0.0), "dct", 0.5)
    assert not domains_match(DctLambda(100.0, 0.0), DctLambda(140.0, 0.0), "dct", 0.5)
    f = PcetFeature(np.arange(16.0))
    for s in (0.0, 0.5, 50.0):
        assert domains_match(f, f, "pcet", s)
        assert domains_match(DctLambda(7.0, 1.0), DctLambda(7.0, 1.0), "dct", s)


def test_domains_match_strict_inequality():
    assert not domains_match(DctLambda(0.0, 0.0), DctLambda(25.0, 0.0), "dct", 0.0)
    a, b = PcetFeature(np.zeros(16)), PcetFeature(np.r_[1.0, np.zeros(15)])
    assert not domains_match(a, b, "pcet", 0.0)
    assert domains_match(a, b, "pcet", 0.5)


def test_domains_match_mode_errors():
    with pytest.raises(InvalidInputError):
        domains_match(DctLambda(1.0, 0.0), PcetFeature(np.zeros(16)), "dct", 0.0)
    with pytest.raises(InvalidInputError):
        domains_match(DctLambda(1.0, 0.0), DctLambda(1.0, 0.0), "zernike", 0.0)
    with pytest.raises(InvalidInputError):
        feature_distance(DctLambda(1.0, 0.0), PcetFeature(np.zeros(16)))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500), st.floats(0, 50), st.sampled_from(["dct", "pcet"]))
def test_domains_match_symmetric(x, y, s, mode):
    if mode == "dct":
        a, b = DctLambda(x, 0.0), DctLambda(y, 0.0)
    else:
        a, b = PcetFeature(np.full(16, x / 4)), PcetFeature(np.full(16, y / 4))
    assert domains_match(a, b, mode, s) == domains_match(b, a, mode, s)


def test_domain_feature_dispatch():
    img = GrayImage(_field(6, size=21))
    assert isinstance(domain_feature(img, (10, 10), 5, "dct"), DctLambda)
    assert isinstance(domain_feature(img, (10, 10), 5, "pcet"), PcetFeature)
    with pytest.raises(InvalidInputError):
        domain_feature(img, (10, 10), 5, "fmt")


def test_block_lambda_square_matches_dct_matrix():
    a = _field(7, size=39)
    C = _dct_matrix(39)
    F = C @ a @ C.T
    assert block_lambda(a) == pytest.approx(np.linalg.svd(F, compute_uv=False)[0], rel=1e-10)
    # the orthonormal DCT keeps singular values, so lambda is the block's spectral norm
    assert block_lambda(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)
    assert block_lambda(np.full((39, 39), 10.0)) == pytest.approx(390.0)
    with pytest.raises(InvalidInputError):
        block_lambda(np.zeros(5))
