import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from cmfd.errors import InvalidInputError
from cmfd.forgerylab import (
    SCENARIOS,
    AttackSpec,
    attack_suite,
    choose_placement,
    jpeg_roundtrip,
    max_extent,
    paste_footprint,
    scenario_specs,
    synthesize,
    write_suite,
)
from cmfd.imgcore import GrayImage

from desk import desk_images


def _base(seed=0, shape=(256, 256)):
    return np.round(np.random.default_rng(seed).uniform(0, 255, shape))


def _camera():
    return dict(desk_images())["camera"]


# -- attack specs --------------------------------------------------------------


@pytest.mark.parametrize(
    "kind, value",
    [("rotate", -180.0), ("rotate", 181.0), ("scale", 0.0), ("noise_local", -0.1), ("jpeg", 0.0),
     ("jpeg", 101.0), ("downsample", 0.0), ("downsample", 120.0), ("blur", 1.0), ("rotate", None)],
)
def test_attack_spec_rejects(kind, value):
    with pytest.raises(InvalidInputError):
        AttackSpec(kind, value)


def test_attack_spec_accepts_bounds():
    for kind, value in [("rotate", 180.0), ("scale", 0.01), ("noise_global", 0.0), ("jpeg", 1.0), ("downsample", 100.0)]:
        assert AttackSpec(kind, value).label == f"{kind}_{value:g}"
    assert AttackSpec().label == "none"


# -- synthesize ----------------------------------------------------------------


def test_plain_copy_changes_only_destination():
    a = _base()
    case = synthesize(a, (10, 20, 96, 96), (140, 130))
    diff = case.forged != a
    dst = np.zeros_like(diff)
    dst[130:226, 140:236] = True
    assert not (diff & ~dst).any()
    assert np.array_equal(case.forged[130:226, 140:236], a[20:116, 10:106])
    truth = np.zeros_like(diff)
    truth[20:116, 10:106] = True
    truth |= dst
    assert np.array_equal(case.truth.mask, truth)
    assert case.truth.area == 2 * 96 * 96


def test_rotate_180_reverses_patch():
    a = _base(1)
    case = synthesize(a, (20, 20, 64, 64), (150, 150), AttackSpec("rotate", 180.0))
    assert np.array_equal(case.forged[150:214, 150:214], a[20:84, 20:84][::-1, ::-1])


def test_rotate_90_is_counter_clockwise_on_screen():
    a = _base(2)
    case = synthesize(a, (20, 20, 64, 64), (150, 150), AttackSpec("rotate", 90.0))
    assert np.array_equal(case.forged[150:214, 150:214], np.rot90(a[20:84, 20:84]))


def test_jpeg_100_is_near_lossless():
    a = _camera()
    src, dst = choose_placement(a, 96, seed=0)
    plain = synthesize(a, src, dst)
    jp = synthesize(a, src, dst, AttackSpec("jpeg", 100.0))
    assert np.max(np.abs(jp.forged - plain.forged)) <= 3
    assert np.array_equal(jp.truth.mask, plain.truth.mask)


def test_jpeg_roundtrip_low_quality_differs():
    a = _camera()
    assert np.mean(np.abs(jpeg_roundtrip(a, 20) - a)) > 1.0


@pytest.mark.parametrize("angle", [10.0, 45.0, -30.0])
def test_rotated_footprint_area(angle):
    a = _base(3, (300, 300))
    case = synthesize(a, (10, 10, 80, 80), (180, 180), AttackSpec("rotate", angle))
    # rasterised rotated square keeps its area up to boundary pixels
    assert abs(case.provenance["paste_pixels"] - 6400) <= 4 * 80
    assert case.truth.area == 6400 + case.provenance["paste_pixels"]


@pytest.mark.parametrize("pct", [91.0, 109.0, 50.0, 200.0])
def test_scaled_footprint_area(pct):
    a = _base(4, (400, 400))
    case = synthesize(a, (10, 10, 60, 60), (240, 240), AttackSpec("scale", pct))
    k = pct / 100
    assert abs(case.provenance["paste_pixels"] - (60 * k) ** 2) <= 4 * 60 * k


def test_paste_out_of_bounds():
    a = _base()
    with pytest.raises(InvalidInputError):
        synthesize(a, (0, 0, 64, 64), (230, 10))
    with pytest.raises(InvalidInputError):
        synthesize(a, (0, 0, 64, 64), (10, 10), AttackSpec("scale", 300.0))
    with pytest.raises(InvalidInputError):
        synthesize(a, (220, 0, 64, 64), (10, 100))


@pytest.mark.parametrize("kind", ["noise_local", "noise_global"])
def test_noise_deterministic_for_seed(kind):
    a = _base(5)
    s = AttackSpec(kind, 0.06)
    one = synthesize(a, (10, 10, 64, 64), (150, 150), s, seed=7)
    two = synthesize(a, (10, 10, 64, 64), (150, 150), s, seed=7)
    other = synthesize(a, (10, 10, 64, 64), (150, 150), s, seed=8)
    assert np.array_equal(one.forged, two.forged)
    assert not np.array_equal(one.forged, other.forged)


def test_local_noise_stays_on_fragment_and_global_noise_is_everywhere():
    a = np.full((200, 200), 128.0)
    loc = synthesize(a, (10, 10, 50, 50), (120, 120), AttackSpec("noise_local", 0.1), seed=1)
    changed = loc.forged != a
    assert changed[120:170, 120:170].mean() > 0.9
    changed[120:170, 120:170] = False
    assert not changed.any()
    glob = synthesize(a, (10, 10, 50, 50), (120, 120), AttackSpec("noise_global", 0.1), seed=1)
    assert (glob.forged != a).mean() > 0.9
    # std 0.1 on [0, 1] is 25.5 gray levels
    assert np.std(glob.forged - a) == pytest.approx(25.5, rel=0.05)


@pytest.mark.parametrize("pct", [90.0, 70.0, 50.0, 30.0, 10.0])
def test_downsample_shapes_and_truth_area(pct):
    a = _camera()
    src, dst = choose_placement(a, 128, seed=1)
    plain = synthesize(a, src, dst)
    case = synthesize(a, src, dst, AttackSpec("downsample", pct))
    side = round(512 * pct / 100)
    assert case.forged.shape == case.truth.mask.shape == (side, side)
    f0 = plain.truth.area / plain.truth.mask.size
    f1 = case.truth.area / case.truth.mask.size
    # truth area as a fraction of the image, within 2 percentage points; at 10%
    # a 128 px side lands on 12 or 13 px depending on grid phase
    assert abs(f1 - f0) <= 0.02


def test_color_base_keeps_channels():
    rgb = np.stack([_base(6), _base(7), _base(8)], axis=-1)
    case = synthesize(rgb, (10, 10, 40, 40), (150, 150))
    assert case.forged.shape == rgb.shape
    assert np.array_equal(case.forged[150:190, 150:190], rgb[10:50, 10:50])
    assert isinstance(case.gray, GrayImage)


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 60), st.data())
def test_plain_diff_inside_destination(frag, data):
    a = _base(data.draw(st.integers(0, 99)), (128, 128))
    sx, sy = data.draw(st.integers(0, 128 - frag)), data.draw(st.integers(0, 128 - frag))
    dx, dy = data.draw(st.integers(0, 128 - frag)), data.draw(st.integers(0, 128 - frag))
    case = synthesize(a, (sx, sy, frag, frag), (dx, dy))
    dst = np.zeros((128, 128), bool)
    dst[dy : dy + frag, dx : dx + frag] = True
    assert not ((case.forged != a) & ~dst).any()
    src = np.zeros((128, 128), bool)
    src[sy : sy + frag, sx : sx + frag] = True
    assert np.array_equal(case.truth.mask, src | dst)


@settings(max_examples=40, deadline=None)
@given(st.floats(-179, 180), st.floats(60, 140))
def test_footprint_inside_source(angle, pct):
    spec = AttackSpec("rotate", angle) if pct < 100 else AttackSpec("scale", pct)
    xx, yy, sx, sy = paste_footprint((400, 400), (50, 60, 70, 50), (200, 200), spec)
    assert xx.size > 0
    assert sx.min() >= 49.5 and sx.max() < 119.5 and sy.min() >= 59.5 and sy.max() < 109.5


# -- suites --------------------------------------------------------------------


@pytest.mark.parametrize(
    "scenario, n", [("plain", 1), ("scale", 14), ("rot", 8), ("noise_local", 5), ("noise_global", 5), ("jpeg", 9), ("downsample", 5)]
)
def test_suite_sizes(scenario, n):
    assert len(scenario_specs(scenario)) == n
    assert len(SCENARIOS[scenario]) == n


def test_suite_grids():
    vals = lambda s: [sp.value for sp in scenario_specs(s)]  # noqa: E731
    assert vals("scale") == [91, 93, 95, 97, 99, 101, 103, 105, 107, 109, 50, 80, 120, 200]
    assert vals("rot") == [2, 4, 6, 8, 10, 20, 60, 180]
    assert vals("noise_local") == [0.02, 0.04, 0.06, 0.08, 0.1]
    assert vals("jpeg") == [20, 30, 40, 50, 60, 70, 80, 90, 100]
    assert vals("downsample") == [90, 70, 50, 30, 10]
    with pytest.raises(InvalidInputError):
        scenario_specs("blur")


def test_attack_suite_shares_placement_and_fits():
    cases = attack_suite(_camera(), "scale", seed=3)
    assert len(cases) == 14
    assert len({tuple(c.provenance["src_rect"]) for c in cases}) == 1
    assert all(c.provenance["scenario"] == "scale" for c in cases)
    assert max_extent(scenario_specs("scale")) == pytest.approx(2.0)
    assert max_extent(scenario_specs("rot")) == pytest.approx(np.cos(np.radians(60)) + np.sin(np.radians(60)))


def test_attack_suite_deterministic():
    a = attack_suite(_camera(), "noise_global", seed=1)
    b = attack_suite(_camera(), "noise_global", seed=1)
    assert all(np.array_equal(x.forged, y.forged) for x, y in zip(a, b))


def test_choose_placement_refuses_flat_image():
    with pytest.raises(InvalidInputError):
        choose_placement(np.full((256, 256), 100.0), 64)
    with pytest.raises(InvalidInputError):
        choose_placement(_base(0, (100, 100)), 64)


def test_choose_placement_non_overlapping_and_textured():
    a = _camera()
    for seed in range(5):
        (sx, sy, w, h), (dx, dy) = choose_placement(a, 120, 1.0, seed=seed)
        assert w == h == 120
        sep = max(dx - (sx + w), sx - (dx + w), dy - (sy + h), sy - (dy + h))
        assert sep >= 16 - 2
        assert 0 <= dx and dx + w <= 512 and 0 <= dy and dy + h <= 512


def test_write_suite_layout(tmp_path):
    base = _camera()
    cases = attack_suite(base, "rot", seed=0)
    manifest = write_suite(cases, tmp_path / "rot", "rot", base=base)
    m = json.loads(manifest.read_text())
    assert m["scenario"] == "rot"
    assert len(m["cases"]) == 9
    assert sum(not e["forged"] for e in m["cases"]) == 1
    for e in m["cases"]:
        d = tmp_path / "rot" / e["dir"]
        assert {p.name for p in d.iterdir()} == {"forged.png", "truth.png", "case.json"}
        with Image.open(d / "truth.png") as t, Image.open(d / "forged.png") as f:
            assert t.size == f.size
    first = json.loads((tmp_path / "rot" / m["cases"][0]["dir"] / "case.json").read_text())
    assert first["spec"] == {"kind": "rotate", "value": 2.0}
    assert "src_rect" in first["provenance"]
