from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from fsts.raster.color import apply_color_adjustment, curve_lut, hue_saturation, levels_lut
from fsts.raster.effects import apply_effect, effect_reach
from fsts.raster.extract import extract_text_shape, levels_remap
from fsts.raster.filters import apply_filter, filter_reach, motion_kernel
from fsts.raster.geometry import (
    RasterError,
    Rect,
    RegionGeometry,
    adaptive_scale,
    composite_paste,
    transform_layer,
    transform_region,
)
from fsts.raster.removal import apply_removal
from fsts.raster.specs import ColorSpec, EffectSpec, FilterSpec, RemovalSpec, TextStyle
from fsts.raster.text import coverage_map, render_text_into, resolve_font, safety_color, text_color
from fsts.sampler import derive_stream

from conftest import flat_image, noisy_image

R = Rect(16, 12, 24, 18)

IDENTITY_KERNEL = [0] * 12 + [1] + [0] * 12

FILTERS = [
    FilterSpec("gaussian-blur", {"radius": 3.0}),
    FilterSpec("sharpen", {"amount": 150, "radius": 2.0, "threshold": 8}),
    FilterSpec("motion-blur", {"angle": 10.0, "distance": 9}),
    FilterSpec("radial-blur", {"method": "spin", "quality": "good"}),
    FilterSpec("radial-blur", {"method": "zoom", "quality": "best"}),
    FilterSpec("smart-blur", {"radius": 3.0, "threshold": 20, "quality": "high", "mode": "normal"}),
    FilterSpec("surface-blur", {"radius": 5, "threshold": 15}),
    FilterSpec("lens-blur", {"aperture_shape": "hexagon", "aperture_radius": 1, "blade_curvature": 10, "rotation": 20, "brightness": 10, "threshold": 240, "amount": 5, "distribution": "uniform", "monochromatic": False}),
    FilterSpec("mean"),
    FilterSpec("blur"),
    FilterSpec("blur-more"),
    FilterSpec("custom-convolution", {"kernel": [1] * 25, "scale": 20, "offset": -3}),
]


def outside_equal(a, b, rect):
    m = np.ones(a.shape[:2], bool)
    m[rect.slices] = False
    return np.array_equal(a[m], b[m])


def glyph_geometry(img, rect):
    shape = np.zeros((rect.h, rect.w))
    shape[4:-4, 5:-5] = 1.0
    return RegionGeometry(rect, shape)


# -- extraction --------------------------------------------------------------------


def test_magic_wand_exact_glyph():
    img = flat_image(230)
    glyph = np.zeros((R.h, R.w), bool)
    glyph[5:12, 4:7] = glyph[5:7, 4:15] = True
    img[R.slices][glyph] = 0
    g = extract_text_shape(img, R, "magic-wand", tolerance=50, contiguous=True, anti_alias=False)
    assert np.array_equal(g.shape > 0, glyph)
    g2 = extract_text_shape(img, R, "magic-wand", tolerance=50, contiguous=False, anti_alias=False)
    assert np.array_equal(g2.shape > 0, glyph)


def test_magic_wand_uniform_is_empty():
    g = extract_text_shape(flat_image(120), R, "magic-wand", tolerance=10, contiguous=True, anti_alias=True)
    assert not g.shape.any()


def test_red_levels_remap():
    assert levels_remap(np.array([130, 237]), 130, 237).tolist() == [0, 255]
    img = flat_image((237, 0, 0))
    img[R.y, R.x] = (130, 0, 0)
    cov = extract_text_shape(img, R, "channel-levels", channel="red", input_levels=(130, 237)).shape
    assert cov[0, 0] == 1.0 and cov.sum() == 1.0


def test_extraction_errors():
    with pytest.raises(RasterError):
        extract_text_shape(flat_image(0), Rect(0, 0, 0, 5), "magic-wand")
    with pytest.raises(RasterError):
        extract_text_shape(flat_image(0), R, "magic-wand", tolerance=0)


# -- geometric transforms ---------------------------------------------------------


def test_transform_identity():
    p = noisy_image(1, 20, 30)
    assert np.array_equal(transform_region(p, 1.0, 0.0), p)


def test_adaptive_scale_min_ratio():
    assert adaptive_scale((10, 20), (30, 40)) == 2.0
    out = transform_region(np.zeros((20, 10, 3), np.uint8), None, 0.0, target=(30, 40))
    assert out.shape[:2] == (40, 20)


def test_rotation_round_trip():
    p = np.tile(np.linspace(60, 200, 40)[None, :, None], (40, 1, 3)).astype(np.uint8)
    rgb, _ = transform_layer(p, None, 1.0, 5.0)
    back, _ = transform_layer(rgb, None, 1.0, -5.0)
    cy, cx = back.shape[0] // 2, back.shape[1] // 2
    inner = back[cy - 10 : cy + 10, cx - 10 : cx + 10].astype(int)
    ref = p[10:30, 10:30].astype(int)
    assert np.abs(inner - ref).max() <= 2


def test_rotation_grows_bounds():
    rgb, alpha = transform_layer(np.zeros((20, 40, 3), np.uint8), None, 1.0, 5.0)
    assert rgb.shape[0] > 20 and rgb.shape[1] > 40
    assert alpha.shape == rgb.shape[:2]


def test_composite_paste_examples():
    dst = flat_image(255, 10, 10)
    patch = np.zeros((4, 4, 3), np.uint8)
    out, r = composite_paste(dst, patch, None, (2, 3))
    assert np.array_equal(out[r.slices], patch) and r == Rect(2, 3, 4, 4)
    same, _ = composite_paste(dst, patch, np.zeros((4, 4)), (2, 3))
    assert np.array_equal(same, dst)
    half, _ = composite_paste(dst, patch, np.full((4, 4), 0.5), (2, 3))
    assert abs(int(half[4, 4, 0]) - 128) <= 1
    with pytest.raises(RasterError):
        composite_paste(dst, patch, None, (20, 20))


# -- removal -------------------------------------------------------------------------


def test_solid_fill():
    img = noisy_image(2)
    out = apply_removal(img, R, RemovalSpec("solid-fill", {"color": [255, 255, 255]}))
    assert (out[R.slices] == 255).all() and outside_equal(out, img, R)


def test_content_aware_on_uniform_background():
    img = flat_image((180, 170, 160))
    img[R.slices] = 0
    out = apply_removal(img, R, RemovalSpec("content-aware-fill", {"iterations": 3}), derive_stream(1, "caf"))
    assert np.array_equal(out, flat_image((180, 170, 160)))


def test_clone_stamp_full_opacity_copies_source():
    img = noisy_image(3)
    out = apply_removal(img, R, RemovalSpec("clone-stamp", {"mode": "normal", "opacity": 100, "flow": 100}), derive_stream(1, "cs"))
    dst = out[R.slices]
    H, W = img.shape[:2]
    found = any(
        np.array_equal(dst, img[y : y + R.h, x : x + R.w]) for y in range(H - R.h + 1) for x in range(W - R.w + 1) if (x, y) != (R.x, R.y)
    )
    assert found and outside_equal(out, img, R)


def test_background_clone_picks_uniform_patch():
    img = noisy_image(4, 60, 80)
    img[12:30, 44:68] = 77  # the up-right grid neighbour
    r = Rect(20, 30, 24, 18)
    out = apply_removal(img, r, RemovalSpec("background-clone", {"blend_mode": "normal"}))
    assert (out[r.slices] == 77).all()


def test_healing_brush_matches_ring_mean():
    img = flat_image(100, 60, 80)
    img[30:60, :] = 180
    r = Rect(30, 40, 10, 8)
    out = apply_removal(img, r, RemovalSpec("healing-brush", {"mode": "normal", "source": "sampled"}), derive_stream(0, "hb"))
    assert np.abs(out[r.slices].astype(int) - 180).max() <= 1


def test_removal_needs_a_source_ring():
    img = noisy_image(5, 20, 20)
    with pytest.raises(RasterError):
        apply_removal(img, Rect(0, 0, 20, 20), RemovalSpec("clone-stamp", {}), derive_stream(0, "x"))


# -- text ------------------------------------------------------------------------------


def test_fonts_resolve():
    for fam in ("Times New Roman", "SimSun", "KaiTi", "Microsoft YaHei", "SimHei"):
        assert resolve_font(fam).is_file()
    with pytest.raises(RasterError):
        resolve_font("Comic Sans")


def test_hard_aa_is_two_valued():
    img = flat_image(240, 40, 120)
    r = Rect(4, 4, 110, 30)
    out = render_text_into(img, r, "Hello", TextStyle("Times New Roman", (10, 20, 30), "None"))
    vals = {tuple(v) for v in out[r.slices].reshape(-1, 3)}
    assert vals <= {(240, 240, 240), (10, 20, 30)} and len(vals) == 2


def test_smooth_aa_has_intermediate_values():
    img = flat_image(240, 40, 120)
    r = Rect(4, 4, 110, 30)
    out = render_text_into(img, r, "Hello", TextStyle("Microsoft YaHei", (0, 0, 0), "Smooth"))
    assert len(np.unique(out[r.slices][..., 0])) > 2


def test_text_is_clipped_to_region():
    img = noisy_image(6, 40, 120)
    r = Rect(10, 5, 20, 25)
    out = render_text_into(img, r, "WWWWWWWWWW", TextStyle("SimHei", (0, 0, 0), "Strong"))
    assert outside_equal(out, img, r)


def test_text_errors():
    img = flat_image(200, 40, 120)
    with pytest.raises(RasterError):
        render_text_into(img, Rect(0, 0, 100, 20), "", TextStyle("SimSun", (0, 0, 0)))
    with pytest.raises(RasterError):
        render_text_into(img, Rect(0, 0, 100, 20), "x" * 21, TextStyle("SimSun", (0, 0, 0)))
    with pytest.raises(RasterError):
        render_text_into(img, Rect(0, 0, 100, 0), "x", TextStyle("SimSun", (0, 0, 0)))


def test_coverage_modes_monotone():
    c = np.linspace(0, 1, 101)
    for mode in ("None", "Sharp", "Crisp", "Smooth", "Strong"):
        m = coverage_map(c, mode)
        assert (np.diff(m) >= 0).all() and m[0] == 0 and m[-1] == 1


def test_safety_color_by_background():
    light = flat_image(230)
    dark = flat_image(20)
    s = derive_stream(0, "safe")
    for _ in range(50):
        lc = [s.integers(0, 64) for _ in range(3)]
        dc = [s.integers(192, 255) for _ in range(3)]
        assert max(safety_color(light, R, lc, dc)) <= 64
        assert min(safety_color(dark, R, lc, dc)) >= 192


def test_text_color_sampling():
    img = flat_image(230)
    img[R.y + 3 : R.y + 8, R.x + 2 : R.x + 10] = (12, 34, 56)
    assert text_color(img, R) == (12, 34, 56)
    assert text_color(flat_image(230), R) == (0, 0, 0)


# -- filters ---------------------------------------------------------------------------


def test_identity_kernel():
    img = noisy_image(7)
    out = apply_filter(img, R, FilterSpec("custom-convolution", {"kernel": IDENTITY_KERNEL, "scale": 1, "offset": 0}))
    assert np.array_equal(out, img)


def test_convolution_offset():
    img = flat_image(128)
    out = apply_filter(img, R, FilterSpec("custom-convolution", {"kernel": IDENTITY_KERNEL, "scale": 1, "offset": 5}))
    assert (out[R.slices] == 133).all() and outside_equal(out, img, R)


def test_convolution_clamps():
    img = flat_image(250)
    out = apply_filter(img, R, FilterSpec("custom-convolution", {"kernel": [10] * 25, "scale": 1, "offset": 5}))
    assert (out[R.slices] == 255).all()
    out = apply_filter(img, R, FilterSpec("custom-convolution", {"kernel": [-10] * 25, "scale": 1, "offset": -5}))
    assert (out[R.slices] == 0).all()


@pytest.mark.parametrize("spec", FILTERS, ids=lambda s: s.kind)
def test_filter_locality(spec):
    img = noisy_image(8)
    out = apply_filter(img, R, spec, derive_stream(0, "f"))
    assert outside_equal(out, img, R)


@pytest.mark.parametrize("spec", FILTERS, ids=lambda s: s.kind)
def test_filter_flat_image_is_fixed_point(spec):
    if spec.kind in ("custom-convolution", "lens-blur"):
        return
    img = flat_image(90)
    assert np.array_equal(apply_filter(img, R, spec, derive_stream(0, "f")), img)


def test_motion_kernel_normalised():
    for ang in (-15.0, 0.0, 10.0, 30.0):
        k = motion_kernel(ang, 9)
        assert k.sum() == pytest.approx(1.0)


def test_filter_reach_bounds_context():
    # pixels farther than the reach from the region do not affect it
    img = noisy_image(9, 80, 100)
    r = Rect(40, 30, 12, 10)
    for spec in FILTERS:
        if spec.kind == "radial-blur":
            continue
        reach = filter_reach(spec)
        other = img.copy()
        far = np.ones(img.shape[:2], bool)
        far[r.expand(reach).clip(100, 80).slices] = False
        other[far] = 255 - other[far]
        a = apply_filter(img, r, spec, derive_stream(0, "r"))[r.slices]
        b = apply_filter(other, r, spec, derive_stream(0, "r"))[r.slices]
        assert np.array_equal(a, b), spec.kind


def test_zero_area_filter():
    with pytest.raises(RasterError):
        apply_filter(noisy_image(0), Rect(3, 3, 0, 4), FilterSpec("mean"))


# -- effects ---------------------------------------------------------------------------


def test_zero_noise_identity():
    img = noisy_image(10)
    for dist in ("uniform", "gaussian"):
        out, _ = apply_effect(img, R, EffectSpec("noise", {"amount": 0.0, "distribution": dist, "monochromatic": False}), derive_stream(0, "n"))
        assert np.array_equal(out, img)


def test_monochromatic_noise_equal_deltas():
    img = flat_image(128)
    out, eff = apply_effect(img, R, EffectSpec("noise", {"amount": 10.0, "distribution": "gaussian", "monochromatic": True}), derive_stream(0, "m"))
    d = out.astype(int) - img.astype(int)
    assert (d[..., 0] == d[..., 1]).all() and (d[..., 1] == d[..., 2]).all()
    assert d.any() and eff == R


def test_noise_deterministic():
    img = noisy_image(11)
    spec = EffectSpec("noise", {"amount": 20.0, "distribution": "uniform", "monochromatic": False})
    a, _ = apply_effect(img, R, spec, derive_stream(4, "d"))
    b, _ = apply_effect(img, R, spec, derive_stream(4, "d"))
    assert np.array_equal(a, b)


def test_noise_clamps():
    img = flat_image(250)
    out, _ = apply_effect(img, R, EffectSpec("noise", {"amount": 35.0, "distribution": "uniform", "monochromatic": True}), derive_stream(0, "c"))
    assert out.max() == 255  # no wraparound to small values
    assert out[R.slices].min() >= 250 - 45


def _dist_to_shape(geom, H, W):
    fg = np.zeros((H, W), bool)
    fg[geom.rect.slices] = geom.shape >= 0.5
    return ndimage.distance_transform_edt(~fg)


def test_drop_shadow_reach():
    img = flat_image(230, 120, 140)
    rect = Rect(45, 40, 40, 30)
    g = glyph_geometry(img, rect)
    spec = EffectSpec("drop-shadow", {"blend_mode": "normal", "color": [0, 0, 0], "opacity": 23, "angle": 30.0, "distance": 7, "spread": 12, "size": 17, "noise": 0})
    out, eff = apply_effect(img, g, spec, derive_stream(0, "ds"))
    changed = (out != img).any(axis=2)
    assert changed.any()
    assert _dist_to_shape(g, 120, 140)[changed].max() <= 7 + 17 + 1
    assert outside_equal(out, img, eff) and eff == rect.expand(effect_reach(spec)).clip(140, 120)


@pytest.mark.parametrize("position", ["inside", "center", "outside"])
def test_stroke_reach(position):
    img = flat_image(230, 60, 80)
    rect = Rect(20, 15, 40, 30)
    g = glyph_geometry(img, rect)
    spec = EffectSpec("stroke", {"size": 5, "position": position, "blend_mode": "normal", "opacity": 100, "color": [200, 0, 0]})
    out, eff = apply_effect(img, g, spec)
    changed = (out != img).any(axis=2)
    assert changed.any()
    assert _dist_to_shape(g, 60, 80)[changed].max() <= effect_reach(spec) + 1e-9
    assert outside_equal(out, img, eff)


def test_outer_glow_reach():
    img = flat_image(230, 60, 80)
    rect = Rect(20, 15, 40, 30)
    g = glyph_geometry(img, rect)
    spec = EffectSpec("outer-glow", {"color": [83, 79, 79], "opacity": 17, "noise": 40, "spread": 8})
    out, eff = apply_effect(img, g, spec, derive_stream(0, "g"))
    changed = (out != img).any(axis=2)
    assert changed.any() and _dist_to_shape(g, 60, 80)[changed].max() <= 9
    assert outside_equal(out, img, eff)


def test_shape_effects_need_mask():
    with pytest.raises(RasterError):
        apply_effect(flat_image(0), R, EffectSpec("stroke", {"size": 1, "color": [0, 0, 0]}))


# -- colour -----------------------------------------------------------------------------


def test_neutral_color_adjustments():
    img = noisy_image(12)
    for spec in (
        ColorSpec("color-balance", {"sliders": [0, 0, 0]}),
        ColorSpec("hue-saturation", {"hue": 0, "saturation": 0, "lightness": 0}),
        ColorSpec("levels", {"channel": "rgb", "input_levels": (0, 255), "output_levels": (0, 255)}),
    ):
        assert np.array_equal(apply_color_adjustment(img, R, spec), img)
    assert np.array_equal(curve_lut("identity"), np.arange(256))


def test_curve_examples():
    lut = curve_lut("raise-highlights")
    assert lut[200] > 200 and lut[50] == 50
    low = curve_lut("lower-shadows")
    assert low[50] < 50 and low[200] == 200


def test_luts_monotone_over_all_inputs():
    for lut in (curve_lut("raise-highlights"), curve_lut("lower-shadows"), levels_lut(130, 237), levels_lut(10, 20, 30, 200)):
        assert lut.shape == (256,) and (np.diff(lut.astype(int)) >= 0).all()


def test_hue_round_trip():
    img = noisy_image(13)
    there = hue_saturation(img, 30, 0, 0)
    back = hue_saturation(there, -30, 0, 0)
    assert np.abs(back.astype(int) - img.astype(int)).max() <= 2


def test_color_balance_shifts_midtones():
    img = flat_image(128)
    out = apply_color_adjustment(img, R, ColorSpec("color-balance", {"tonal_range": "midtones", "sliders": [100, 0, -100]}))
    px = out[R.y, R.x].astype(int)
    assert px[0] > 128 and px[1] == 128 and px[2] < 128
    assert outside_equal(out, img, R)


# -- properties ---------------------------------------------------------------------------


rects = st.builds(
    lambda x, y, w, h: Rect(x, y, w, h),
    st.integers(0, 30),
    st.integers(0, 20),
    st.integers(1, 30),
    st.integers(1, 24),
)


@settings(max_examples=40, deadline=None)
@given(rects, st.integers(0, 2**32 - 1), st.sampled_from(FILTERS))
def test_filter_locality_property(rect, seed, spec):
    img = noisy_image(seed % 1000)
    if not rect.within(64, 48):
        return
    out = apply_filter(img, rect, spec, derive_stream(seed, "p"))
    assert outside_equal(out, img, rect)


@settings(max_examples=40, deadline=None)
@given(rects, st.integers(0, 2**32 - 1), st.sampled_from(["content-aware-fill", "solid-fill", "background-clone", "clone-stamp", "healing-brush"]))
def test_removal_locality_property(rect, seed, kind):
    img = noisy_image(seed % 1000)
    if not rect.within(64, 48) or rect.w > 40 or rect.h > 30:
        return
    params = {"color": [1, 2, 3], "iterations": 1, "opacity": 100, "flow": 100, "mode": "normal"}
    try:
        out = apply_removal(img, rect, RemovalSpec(kind, params), derive_stream(seed, "r"))
    except RasterError as e:
        # documented failure: no same-size patch fits outside the region
        assert "no same-size source" in str(e) and kind in ("background-clone", "clone-stamp", "healing-brush")
        return
    assert outside_equal(out, img, rect)


@settings(max_examples=40, deadline=None)
@given(rects, st.integers(0, 2**32 - 1), st.floats(0, 35), st.booleans())
def test_noise_locality_property(rect, seed, amount, mono):
    img = noisy_image(seed % 1000)
    if not rect.within(64, 48):
        return
    out, eff = apply_effect(img, rect, EffectSpec("noise", {"amount": amount, "distribution": "gaussian", "monochromatic": mono}), derive_stream(seed, "n"))
    assert outside_equal(out, img, eff)


@settings(max_examples=40, deadline=None)
@given(rects, st.sampled_from(["raise-highlights", "lower-shadows"]), st.integers(-30, 30), st.integers(-100, 100))
def test_color_locality_property(rect, curve, hue, bal):
    img = noisy_image(abs(hue) + 1)
    if not rect.within(64, 48):
        return
    for spec in (
        ColorSpec("color-curves", {"curve": curve}),
        ColorSpec("hue-saturation", {"hue": hue, "saturation": 10, "lightness": -10}),
        ColorSpec("color-balance", {"sliders": [bal, -bal, bal // 2]}),
    ):
        assert outside_equal(apply_color_adjustment(img, rect, spec), img, rect)
