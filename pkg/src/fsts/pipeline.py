"""Plan execution, ground-truth masks and per-sample synthesis.

Each executor takes the working image, one plan item and that item's own
random stream, and returns the edited image plus the rectangles it was
allowed to touch (the effective geometry). Executors restore every pixel
outside those rectangles, so the geometry bounds the edit by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .dataset.annotations import RegionAnnotation
from .model.fit import PopulationModel
from .model.table import ParameterTable
from .raster.color import apply_color_adjustment
from .raster.effects import apply_effect
from .raster.extract import extract_text_shape
from .raster.filters import apply_filter
from .raster.geometry import RasterError, Rect, RegionGeometry, adaptive_scale, composite_paste, rects_mask, transform_layer
from .raster.removal import apply_removal
from .raster.specs import ColorSpec, EffectSpec, FilterSpec, RemovalSpec, TextStyle
from .raster.text import render_text_layer, safety_color, text_color
from .sampler import PlanItem, ResolvedOp, SourceRef, TamperingPlan, derive_stream, exec_stream, sample_plan

RECORD_VERSION = 1
MASK_TAU = 1
BLANK_STRIDE = 2


class SynthesisError(RuntimeError):
    pass


class MaskContainmentError(SynthesisError):
    pass


@dataclass(frozen=True, eq=False)
class SourceImage:
    """A splicing donor: pixels plus region annotations."""

    image_id: str
    image: np.ndarray
    regions: tuple[RegionAnnotation, ...]

    def ref(self) -> SourceRef:
        return SourceRef(self.image_id, tuple(self.regions))


@dataclass
class ExecResult:
    image: np.ndarray
    geometries: list[Rect]
    details: dict[str, Any] = field(default_factory=dict)


# -- helpers -------------------------------------------------------------------


def _confine(original: np.ndarray, edited: np.ndarray, rects: Sequence[Rect]) -> np.ndarray:
    keep = rects_mask(rects, original.shape[1], original.shape[0])
    out = edited.copy()
    out[~keep] = original[~keep]
    return out


def _clamp_rect(r: Rect, W: int, H: int) -> Rect:
    """Shift ``r`` inside the image, shrinking only if it is larger than it."""
    w, h = min(r.w, W), min(r.h, H)
    return Rect(min(max(r.x, 0), W - w), min(max(r.y, 0), H - h), w, h)


def _post_op(img: np.ndarray, area: RegionGeometry, op: ResolvedOp, rng) -> tuple[np.ndarray, Rect]:
    """Apply one concealment operation to the pasted area."""
    v, p = op.variant, op.params
    if v in FilterSpec.KINDS:
        return apply_filter(img, area, FilterSpec(v, p), rng), area.rect
    if v in ColorSpec.KINDS:
        return apply_color_adjustment(img, area, ColorSpec(v, p)), area.rect
    if v in EffectSpec.KINDS:
        return apply_effect(img, area, EffectSpec(v, p), rng)
    raise SynthesisError(f"no raster operation for post-processing variant {v!r}")


def _post_process(img: np.ndarray, area: RegionGeometry, item: PlanItem, rng) -> tuple[np.ndarray, list[Rect]]:
    rects = [area.rect]
    for op in item.post_ops:
        img, eff = _post_op(img, area, op, rng)
        if eff != area.rect:
            rects.append(eff)
    return img, rects


def _shape_of(img: np.ndarray, rect: Rect, item: PlanItem) -> np.ndarray:
    wand = item.op("magic-wand")
    if wand is not None:
        g = extract_text_shape(img, rect, "magic-wand", **wand.params)
        return g.shape
    lv = item.op("channel-levels")
    if lv is not None:
        g = extract_text_shape(img, rect, "channel-levels", channel=lv.params["channel"], input_levels=lv.params["input_levels"])
        return g.shape
    return np.ones((rect.h, rect.w))


def _rotation(item: PlanItem) -> float:
    op = item.op("region-rotation")
    return 0.0 if op is None else float(op.params["rotation_angle"])


def _adjust(item: PlanItem) -> float:
    op = item.op("region-scaling")
    if op is None or "adjust" not in op.params:
        return 1.0
    return 1.0 + float(op.params["adjust"]) / 100.0


def _paste_layer(img, rgb, alpha, target: Rect, item, rng, details) -> ExecResult:
    """Centre a transformed layer on ``target``, paste it, post-process."""
    H, W = img.shape[:2]
    lh, lw = rgb.shape[:2]
    cx, cy = target.center
    at = (int(math.floor(cx - lw / 2.0 + 0.5)), int(math.floor(cy - lh / 2.0 + 0.5)))
    try:
        out, area = composite_paste(img, rgb, alpha, at)
    except RasterError as exc:
        raise RasterError(f"paste target degenerate after clipping: {exc}") from None
    sy, sx = area.y - at[1], area.x - at[0]
    shape = alpha[sy : sy + area.h, sx : sx + area.w]
    details["paste_rect"] = area.to_list()
    out, rects = _post_process(out, RegionGeometry(area, shape), item, rng)
    return ExecResult(_confine(img, out, rects), rects, details)


def _transplant(img: np.ndarray, src_img: np.ndarray, item: PlanItem, target: Rect, rng, details) -> ExecResult:
    src = item.source_rect
    patch = src_img[src.slices]
    alpha = _shape_of(src_img, src, item)
    scaling = item.op("region-scaling")
    scale = adaptive_scale((src.w, src.h), (target.w, target.h)) if scaling is not None else 1.0
    rgb, a = transform_layer(patch, alpha, scale, _rotation(item))
    details["scale"] = scale
    return _paste_layer(img, rgb, a, target, item, rng, details)


# -- executors -----------------------------------------------------------------


def execute_copy_move(img: np.ndarray, item: PlanItem, rng) -> ExecResult:
    if item.type_id != "copy-move":
        raise SynthesisError(f"item {item.index} is {item.type_id}, not copy-move")
    H, W = img.shape[:2]
    src = item.source_rect
    if src is None or not src.within(W, H):
        raise RasterError("copy-move source region outside image")
    if item.paste_mode == "nearby-9-grid":
        dx, dy = item.paste_offset
        target = _clamp_rect(Rect(src.x + dx * src.w, src.y + dy * src.h, src.w, src.h), W, H)
    else:
        target = item.target
    return _transplant(img, img, item, target, rng, {"target": target.to_list()})


def execute_splicing(target_img: np.ndarray, source_img: np.ndarray | None, item: PlanItem, rng) -> ExecResult:
    if item.type_id != "splicing":
        raise SynthesisError(f"item {item.index} is {item.type_id}, not splicing")
    if source_img is None or item.source_rect is None:
        raise SynthesisError("splicing needs a source pool with another annotated image")
    if source_img is target_img or np.shares_memory(source_img, target_img):
        raise SynthesisError("splicing source and target must be different images")
    H, W = source_img.shape[:2]
    if not item.source_rect.within(W, H):
        raise RasterError("splicing source region outside source image")
    return _transplant(target_img, source_img, item, item.target, rng, {"target": item.target.to_list()})


def _transform_rect(rect: Rect, scale: float, rotation: float, W: int, H: int) -> Rect:
    """Scale about the centre, then take the bounding box of the rotation."""
    cx, cy = rect.center
    w, h = rect.w * scale, rect.h * scale
    th = math.radians(rotation)
    bw = abs(w * math.cos(th)) + abs(h * math.sin(th))
    bh = abs(w * math.sin(th)) + abs(h * math.cos(th))
    x0, y0 = int(math.floor(cx - bw / 2.0)), int(math.floor(cy - bh / 2.0))
    x1, y1 = int(math.ceil(cx + bw / 2.0)), int(math.ceil(cy + bh / 2.0))
    r = Rect(x0, y0, max(1, x1 - x0), max(1, y1 - y0)).clip(W, H)
    if r.area == 0:
        raise RasterError(f"transformed region {rect.to_list()} leaves the image")
    return r


def _removal_spec(item: PlanItem) -> RemovalSpec:
    for o in item.ops:
        if o.variant in RemovalSpec.KINDS:
            return RemovalSpec(o.variant, o.params)
    raise SynthesisError(f"item {item.index} has no content-removal variant")


def execute_removal(img: np.ndarray, item: PlanItem, rng) -> ExecResult:
    if item.type_id != "removal":
        raise SynthesisError(f"item {item.index} is {item.type_id}, not removal")
    H, W = img.shape[:2]
    rect = _transform_rect(item.target, _adjust(item), _rotation(item), W, H)
    out = apply_removal(img, rect, _removal_spec(item), rng)
    rects = [rect]
    area = RegionGeometry(rect, np.ones((rect.h, rect.w)))
    for op in item.post_ops:
        out, eff = _post_op(out, area, op, rng)
        if eff != rect:
            rects.append(eff)
    return ExecResult(_confine(img, out, rects), rects, {"target": rect.to_list()})


def find_blank(img: np.ndarray, size: tuple[int, int]) -> Rect:
    """Lowest-variance window of ``size`` (w, h); ties go to the top-left."""
    H, W = img.shape[:2]
    w, h = min(size[0], W), min(size[1], H)
    luma = img.astype(float) @ np.array([0.299, 0.587, 0.114])
    mean = ndimage.uniform_filter(luma, (h, w), mode="nearest")
    var = ndimage.uniform_filter(luma * luma, (h, w), mode="nearest") - mean * mean
    # uniform_filter centres its window; index (y + h//2, x + w//2) is the window at (x, y)
    oy, ox = h // 2, w // 2
    grid = var[oy : oy + H - h + 1 : BLANK_STRIDE, ox : ox + W - w + 1 : BLANK_STRIDE]
    iy, ix = np.unravel_index(int(np.argmin(grid)), grid.shape)
    return Rect(int(ix) * BLANK_STRIDE, int(iy) * BLANK_STRIDE, w, h)


def _text_style(img: np.ndarray, item: PlanItem, rect: Rect) -> TextStyle:
    fp = item.op("font-properties")
    font = fp.params["font"] if fp else "Times New Roman"
    aa = fp.params["anti_aliasing"] if fp else "Smooth"
    safety = item.op("safety-color")
    if safety is not None:
        color = safety_color(img, rect, safety.params["light_background"], safety.params["dark_background"])
    else:
        ref = item.color_ref if item.color_ref is not None else rect
        color = text_color(img, ref)
    return TextStyle(font=font, color=color, anti_aliasing=aa)


def _insert_text(base: np.ndarray, item: PlanItem, rect: Rect, style: TextStyle, rng, details) -> tuple[np.ndarray, list[Rect]]:
    rgb, cov = render_text_layer(item.text, style, rect.h)
    rgb, cov = transform_layer(rgb, cov, _adjust(item), _rotation(item))
    # left-aligned, vertically centred, clipped to the region
    lh, lw = rgb.shape[:2]
    oy = (lh - rect.h) // 2
    layer = np.zeros((rect.h, rect.w, 3), dtype=np.uint8)
    alpha = np.zeros((rect.h, rect.w))
    ys = slice(max(0, -oy), max(0, -oy) + min(rect.h, lh - max(0, oy)))
    src_y = slice(max(0, oy), max(0, oy) + (ys.stop - ys.start))
    w = min(rect.w, lw)
    layer[ys, :w] = rgb[src_y, :w]
    alpha[ys, :w] = cov[src_y, :w]
    out, _ = composite_paste(base, layer, alpha, (rect.x, rect.y))
    details["text_color"] = list(style.color)
    return _post_process(out, RegionGeometry(rect, alpha), item, rng)


def execute_insertion(img: np.ndarray, item: PlanItem, rng) -> ExecResult:
    if item.type_id != "insertion":
        raise SynthesisError(f"item {item.index} is {item.type_id}, not insertion")
    rect = item.target
    details: dict[str, Any] = {}
    if rect is None:
        rect = find_blank(img, item.blank_size or (64, 16))
        details["blank"] = rect.to_list()
    style = _text_style(img, item, rect)
    out, rects = _insert_text(img, item, rect, style, rng, details)
    return ExecResult(_confine(img, out, rects), rects, details)


def execute_replacement(img: np.ndarray, item: PlanItem, rng) -> ExecResult:
    if item.type_id != "replacement":
        raise SynthesisError(f"item {item.index} is {item.type_id}, not replacement")
    rect = item.target
    style = _text_style(img, item, rect)  # colour comes from the original text
    erased = apply_removal(img, rect, _removal_spec(item), rng)
    out, rects = _insert_text(erased, item, rect, style, rng, {})
    return ExecResult(_confine(img, out, rects), rects, {"text_color": list(style.color)})


# -- masks -----------------------------------------------------------------------


def generate_mask(original: np.ndarray, tampered: np.ndarray, geometries: Sequence[Rect] | None = None, tau: int = MASK_TAU) -> np.ndarray:
    """Binary tamper mask: channel-max difference >= tau, then a 3x3 closing.

    The closing is computed on a zero-padded canvas so it only ever adds
    pixels. With ``geometries`` given, every mask pixel must lie within one
    pixel of some geometry rectangle.
    """
    if original.shape != tampered.shape:
        raise ValueError(f"shape mismatch {original.shape} vs {tampered.shape}")
    diff = np.abs(original.astype(np.int16) - tampered.astype(np.int16)).max(axis=2) >= tau
    st = np.ones((3, 3), dtype=bool)
    pad = np.pad(diff, 1)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(pad, st), st, border_value=1)[1:-1, 1:-1]
    mask = diff | closed
    if geometries is not None:
        allowed = rects_mask(geometries, original.shape[1], original.shape[0], dilate=1)
        stray = mask & ~allowed
        if stray.any():
            ys, xs = np.nonzero(stray)
            raise MaskContainmentError(f"{int(stray.sum())} mask pixels outside effective geometry, first at ({xs[0]}, {ys[0]})")
    return mask


# -- samples ---------------------------------------------------------------------


@dataclass
class SampleRecord:
    """Everything needed to re-execute a sample: seed, id and plan."""

    sample_id: str
    master_seed: int
    image_id: str | None
    plan: TamperingPlan
    items: list[dict]
    image_size: tuple[int, int]
    format_version: int = RECORD_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "sample_id": self.sample_id,
            "master_seed": self.master_seed,
            "image_id": self.image_id,
            "image_size": list(self.image_size),
            "plan": self.plan.to_dict(),
            "items": self.items,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        if d.get("format_version") != RECORD_VERSION:
            raise ValueError(f"unsupported record format_version {d.get('format_version')!r}")
        return cls(
            sample_id=d["sample_id"],
            master_seed=int(d["master_seed"]),
            image_id=d.get("image_id"),
            plan=TamperingPlan.from_dict(d["plan"]),
            items=list(d["items"]),
            image_size=tuple(d["image_size"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "SampleRecord":
        return cls.from_dict(json.loads(text))

    def geometries(self) -> list[Rect]:
        return [Rect.from_list(g) for it in self.items for g in it["geometries"]]


def execute_item(img: np.ndarray, item: PlanItem, rng, sources: Mapping[str, SourceImage]) -> ExecResult:
    if item.type_id == "copy-move":
        return execute_copy_move(img, item, rng)
    if item.type_id == "splicing":
        donor = sources.get(item.source_image) if item.source_image else None
        return execute_splicing(img, None if donor is None else donor.image, item, rng)
    if item.type_id == "removal":
        return execute_removal(img, item, rng)
    if item.type_id == "insertion":
        return execute_insertion(img, item, rng)
    if item.type_id == "replacement":
        return execute_replacement(img, item, rng)
    raise SynthesisError(f"unknown type {item.type_id!r}")


def execute_plan(original: np.ndarray, plan: TamperingPlan, master_seed: int, sources: Mapping[str, SourceImage]) -> tuple[np.ndarray, list[dict]]:
    work = original.copy()
    entries = []
    for item in plan.items:
        rng = exec_stream(master_seed, plan.sample_id, item.index)
        try:
            res = execute_item(work, item, rng, sources)
        except (RasterError, SynthesisError, ValueError, KeyError) as exc:
            raise SynthesisError(f"{plan.sample_id}: plan item {item.index} ({item.type_id}) failed: {exc}") from exc
        work = res.image
        entries.append(
            {
                "index": item.index,
                "type_id": item.type_id,
                "geometries": [r.to_list() for r in res.geometries],
                "details": res.details,
            }
        )
    return work, entries


def synthesize_sample(
    original: np.ndarray,
    source_pool: Mapping[str, SourceImage] | Sequence[SourceImage],
    model: PopulationModel,
    table: ParameterTable,
    regions: Sequence[RegionAnnotation],
    master_seed: int,
    sample_id: str,
    image_id: str | None = None,
) -> tuple[np.ndarray, np.ndarray, SampleRecord]:
    """Sample a plan for ``original``, execute it and derive the mask."""
    sources = _pool(source_pool)
    refs = [s.ref() for s in sources.values() if s.image_id != image_id]
    plan = sample_plan(model, table, regions, derive_stream(master_seed, sample_id), refs, image_id)
    tampered, entries = execute_plan(original, plan, master_seed, sources)
    record = SampleRecord(sample_id, int(master_seed), image_id, plan, entries, (original.shape[1], original.shape[0]))
    mask = generate_mask(original, tampered, record.geometries())
    return tampered, mask, record


def replay_sample(original: np.ndarray, source_pool, record: SampleRecord) -> tuple[np.ndarray, np.ndarray]:
    """Re-execute a recorded plan; output matches the original run."""
    if tuple(record.image_size) != (original.shape[1], original.shape[0]):
        raise SynthesisError(f"record is for a {record.image_size} image, got {original.shape[1]}x{original.shape[0]}")
    tampered, entries = execute_plan(original, record.plan, record.master_seed, _pool(source_pool))
    mask = generate_mask(original, tampered, [Rect.from_list(g) for e in entries for g in e["geometries"]])
    return tampered, mask


def _pool(source_pool) -> dict[str, SourceImage]:
    if isinstance(source_pool, Mapping):
        return dict(source_pool)
    return {s.image_id: s for s in source_pool}
