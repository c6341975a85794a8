from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from scipy import ndimage

from fsts.model import PopulationModel
from fsts.pipeline import (
    MaskContainmentError,
    SampleRecord,
    SourceImage,
    SynthesisError,
    execute_copy_move,
    execute_insertion,
    execute_removal,
    execute_replacement,
    execute_splicing,
    find_blank,
    generate_mask,
    replay_sample,
    synthesize_sample,
)
from fsts.raster.geometry import Rect, rects_mask
from fsts.sampler import PlanItem, ResolvedOp, derive_stream, sample_plan

from conftest import flat_image, noisy_image, text_regions


def op(op_id, variant, phase="main", **params):
    return ResolvedOp(op_id, variant, phase, params)


def glyph_page():
    img = flat_image(235, 60, 120)
    img[20:34, 22:25] = 10  # a vertical stroke
    img[20:23, 22:32] = 10
    return img


def changed(a, b):
    return (a != b).any(axis=2)


# -- copy-move / splicing ------------------------------------------------------------


def test_copy_move_residual_rect_copy_to_right_neighbour():
    img = glyph_page()
    src = Rect(20, 18, 14, 18)
    item = PlanItem(0, "copy-move", src, "t0", [], source_rect=src, paste_mode="nearby-9-grid", paste_offset=(1, 0))
    res = execute_copy_move(img, item, derive_stream(0, "cm"))
    tgt = Rect(34, 18, 14, 18)
    assert np.array_equal(res.image[tgt.slices], img[src.slices])  # duplicate glyph
    assert res.geometries == [tgt]
    assert not changed(res.image, img)[~rects_mask([tgt], 120, 60)].any()


def test_copy_move_post_processing_extends_geometry():
    img = glyph_page()
    src = Rect(20, 18, 14, 18)
    post = op("3.4", "stroke", "post", size=3, position="outside", blend_mode="normal", opacity=100, color=[255, 0, 0])
    wand = op("2.1", "magic-wand", tolerance=40, contiguous=True, anti_alias=False)
    item = PlanItem(0, "copy-move", src, "t0", [wand, post], source_rect=src, paste_mode="nearby-9-grid", paste_offset=(1, 0))
    res = execute_copy_move(img, item, derive_stream(0, "cm"))
    assert len(res.geometries) == 2 and res.geometries[1] == Rect(31, 15, 20, 24)
    assert not changed(res.image, img)[~rects_mask(res.geometries, 120, 60)].any()


def test_splicing_adaptive_scaling_fits_target():
    donor = noisy_image(1, 60, 120)
    img = flat_image(200, 60, 120)
    tgt = Rect(50, 10, 30, 12)
    item = PlanItem(0, "splicing", tgt, "t0", [op("2.2", "region-scaling", scaling_factor="adaptive")], source_rect=Rect(5, 5, 20, 20), source_image="d")
    res = execute_splicing(img, donor, item, derive_stream(0, "sp"))
    diff = changed(res.image, img)
    ys, xs = np.nonzero(diff)
    assert res.details["scale"] == pytest.approx(0.6)
    assert xs.min() >= tgt.x and xs.max() < tgt.x1 and ys.min() >= tgt.y and ys.max() < tgt.y1


def test_splicing_empty_post_pastes_source():
    donor = noisy_image(2, 60, 120)
    img = flat_image(200, 60, 120)
    tgt = Rect(50, 10, 20, 20)
    item = PlanItem(0, "splicing", tgt, "t0", [], source_rect=Rect(5, 5, 20, 20), source_image="d")
    res = execute_splicing(img, donor, item, derive_stream(0, "sp"))
    assert np.array_equal(res.image[tgt.slices], donor[5:25, 5:25])


def test_splicing_rejects_same_image():
    img = noisy_image(3, 60, 120)
    item = PlanItem(0, "splicing", Rect(50, 10, 20, 20), "t0", [], source_rect=Rect(5, 5, 20, 20))
    with pytest.raises(SynthesisError, match="different"):
        execute_splicing(img, img, item, derive_stream(0, "x"))
    with pytest.raises(SynthesisError, match="source pool"):
        execute_splicing(img, None, item, derive_stream(0, "x"))


# -- removal / insertion / replacement ---------------------------------------------------


def test_removal_solid_fill():
    img = glyph_page()
    r = Rect(20, 18, 14, 18)
    item = PlanItem(0, "removal", r, "t0", [op("2.1", "solid-fill", color=[9, 8, 7])])
    res = execute_removal(img, item, derive_stream(0, "rm"))
    assert (res.image[r.slices] == [9, 8, 7]).all()
    assert res.geometries == [r]


def test_removal_content_aware_erases_text():
    img = glyph_page()
    r = Rect(20, 18, 14, 18)
    item = PlanItem(0, "removal", r, "t0", [op("2.1", "content-aware-fill", iterations=2)])
    res = execute_removal(img, item, derive_stream(0, "rm"))
    assert np.array_equal(res.image, flat_image(235, 60, 120))


def test_removal_transform_scales_rect():
    img = flat_image(100, 60, 120)
    item = PlanItem(0, "removal", Rect(40, 20, 20, 20), "t0", [op("2.1", "solid-fill", color=[0, 0, 0]), op("3.1", "region-scaling", adjust=5.0)])
    res = execute_removal(img, item, derive_stream(0, "rm"))
    assert res.geometries == [Rect(39, 19, 22, 22)]


def test_safety_color_on_dark_background():
    img = flat_image(25, 40, 120)
    r = Rect(4, 6, 100, 26)
    ops = [op("2.1", "font-properties", font="SimHei", anti_aliasing="None"), op("2.2", "safety-color", light_background=[10, 20, 30], dark_background=[200, 210, 250])]
    res = execute_insertion(img, PlanItem(0, "insertion", r, "b0", ops, text="Ab3"), derive_stream(0, "ins"))
    px = res.image[changed(res.image, img)]
    assert len(px) and (px >= 192).all()


def test_single_character_stays_in_glyph_extent():
    img = flat_image(230, 40, 120)
    r = Rect(10, 6, 80, 24)
    ops = [op("2.1", "font-properties", font="Times New Roman", anti_aliasing="Smooth")]
    res = execute_insertion(img, PlanItem(0, "insertion", r, "b0", ops, text="H"), derive_stream(0, "ins"))
    d = changed(res.image, img)
    ys, xs = np.nonzero(d)
    assert d.any() and xs.min() >= r.x and xs.max() < r.x + 24 and ys.min() >= r.y and ys.max() < r.y1


def test_insertion_blank_fallback():
    img = noisy_image(4, 80, 160)
    img[50:74, 60:140] = 220
    item = PlanItem(0, "insertion", None, None, [op("2.1", "font-properties", font="SimSun", anti_aliasing="Crisp")], text="ok", blank_size=(64, 20))
    res = execute_insertion(img, item, derive_stream(0, "blank"))
    b = Rect.from_list(res.details["blank"])
    assert b.x >= 60 and b.x1 <= 140 and b.y >= 50 and b.y1 <= 74


def test_find_blank_picks_flat_window():
    img = noisy_image(5, 60, 100)
    img[30:50, 40:90] = 128
    r = find_blank(img, (40, 16))
    assert (img[r.slices] == 128).all()


def test_replacement_solid_fill_plus_text():
    img = glyph_page()
    r = Rect(20, 18, 40, 18)
    ops = [
        op("2.1", "solid-fill", color=[235, 235, 235]),
        op("3.1", "font-properties", font="Microsoft YaHei", anti_aliasing="None"),
        op("3.3", "safety-color", light_background=[0, 0, 200], dark_background=[255, 255, 255]),
    ]
    res = execute_replacement(img, PlanItem(0, "replacement", r, "t0", ops, text="NEW", color_ref=r), derive_stream(0, "rep"))
    vals = {tuple(v) for v in res.image[r.slices].reshape(-1, 3)}
    assert vals == {(235, 235, 235), (0, 0, 200)}
    assert not (res.image[r.slices] == 10).all(axis=2).any()  # old glyph gone


# -- masks -----------------------------------------------------------------------------


def test_mask_identity():
    img = noisy_image(6)
    assert not generate_mask(img, img.copy()).any()


def test_mask_exact_block():
    img = noisy_image(7)
    t = img.copy()
    t[10:20, 30:40] = 255 - img[10:20, 30:40] | 1
    m = generate_mask(img, t, [Rect(30, 10, 10, 10)])
    assert m.sum() == 100 and m[10:20, 30:40].all()


def test_mask_two_components():
    img = flat_image(100)
    t = img.copy()
    t[5:10, 5:10] = 0
    t[30:40, 40:50] = 0
    _, n = ndimage.label(generate_mask(img, t))
    assert n == 2


def test_mask_closing_fills_pinholes():
    img = flat_image(100)
    t = img.copy()
    t[10:15, 10:15] = 0
    t[12, 12] = 100
    m = generate_mask(img, t)
    assert m[12, 12] and m.sum() == 25


def test_mask_errors():
    img = flat_image(100)
    t = img.copy()
    t[30, 30] = 0
    with pytest.raises(MaskContainmentError):
        generate_mask(img, t, [Rect(0, 0, 10, 10)])
    with pytest.raises(ValueError):
        generate_mask(img, img[:-1])


# -- whole samples -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus(corpus_dir):
    from fsts.dataset.annotations import load_annotations
    from fsts.dataset.io import read_image

    out = {}
    for p in sorted(corpus_dir.glob("*.png")):
        out[p.stem] = SourceImage(p.stem, read_image(p), tuple(load_annotations(p.with_suffix(".json"))))
    return out


def test_synthesis_deterministic(table, corpus):
    src = corpus["doc_000"]
    model = PopulationModel.from_table(table)
    a = synthesize_sample(src.image, corpus, model, table, src.regions, 42, "s000001", "doc_000")
    b = synthesize_sample(src.image, corpus, model, table, src.regions, 42, "s000001", "doc_000")
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) and a[2].to_json() == b[2].to_json()


def test_removal_only_model(table, corpus):
    src = corpus["doc_001"]
    model = PopulationModel.from_weights({"removal": 1.0})
    for i in range(5):
        t, m, rec = synthesize_sample(src.image, corpus, model, table, src.regions, 3, f"r{i}", "doc_001")
        assert {it["type_id"] for it in rec.items} == {"removal"}
        assert not m[~rects_mask(rec.geometries(), t.shape[1], t.shape[0], dilate=1)].any()


def test_record_round_trip_and_replay(table, corpus):
    src = corpus["doc_002"]
    model = PopulationModel.from_table(table)
    t, m, rec = synthesize_sample(src.image, corpus, model, table, src.regions, 5, "s000009", "doc_002")
    again = SampleRecord.from_json(rec.to_json())
    assert again.to_json() == rec.to_json()
    t2, m2 = replay_sample(src.image, corpus, again)
    assert np.array_equal(t, t2) and np.array_equal(m, m2)
    with pytest.raises(SynthesisError):
        replay_sample(src.image[:-1], corpus, again)


def test_record_version_checked():
    with pytest.raises(ValueError, match="format_version"):
        SampleRecord.from_dict({"format_version": 99})


def test_record_has_no_timings(table, corpus):
    src = corpus["doc_003"]
    _, _, rec = synthesize_sample(src.image, corpus, PopulationModel.from_table(table), table, src.regions, 1, "x", "doc_003")
    assert "timings" not in rec.to_json()
    assert all("type_id" in it and "geometries" in it for it in rec.items)


def test_outside_mask_fidelity(table, corpus):
    model = PopulationModel.from_table(table)
    ids = sorted(corpus)
    for i in range(30):
        src = corpus[ids[i % len(ids)]]
        t, m, rec = synthesize_sample(src.image, corpus, model, table, src.regions, 11, f"f{i}", src.image_id)
        outside = ~ndimage.binary_dilation(m, np.ones((3, 3), bool))
        assert np.array_equal(t[outside], src.image[outside])


def test_removal_variant_shares(table):
    model = PopulationModel.from_weights({"removal": 1.0})
    c = Counter()
    regions = text_regions(12)
    i = 0
    while sum(c.values()) < 20_000:
        for it in sample_plan(model, table, regions, derive_stream(21, f"rv{i}")).items:
            c[it.op_at("2.1").variant] += 1
        i += 1
    n = sum(c.values())
    assert abs(c["content-aware-fill"] / n - 0.5582) <= 0.015
