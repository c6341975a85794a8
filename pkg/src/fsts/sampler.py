"""Seeded sampling of concrete tampering plans.

Random streams
--------------
Every stream is keyed by ``(master_seed, sample_id)``. The seed material is::

    SHA-256( b"fsts.rng.v1\\x00" || master_seed as 8 bytes little-endian
             || sample_id encoded as UTF-8 )

read as a little-endian integer and fed to ``numpy.random.SeedSequence``,
which seeds a PCG64 generator. Sub-streams (one per executed plan item) use
the sample id suffixed with ``#exec<index>``.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .dataset.annotations import RegionAnnotation
from .model.fit import PopulationModel
from .model.table import TYPE_IDS, OperationVariant, ParameterTable, ParamSpec, StepSpec, VariantGroup, _thaw
from .raster.geometry import Rect

MAX_REGIONS = 12
TEXT_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
NEIGHBOR_OFFSETS = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dx, dy) != (0, 0)]
_DOMAIN = b"fsts.rng.v1\x00"


class SamplingError(ValueError):
    pass


class RngStream:
    """Deterministic random stream for one (seed, sample id) pair.

    Not safe to share between concurrent consumers.
    """

    def __init__(self, master_seed: int, sample_id: str):
        if not (0 <= int(master_seed) < 2**64):
            raise SamplingError(f"master seed {master_seed} is not a 64-bit unsigned integer")
        self.master_seed = int(master_seed)
        self.sample_id = str(sample_id)
        digest = hashlib.sha256(
            _DOMAIN + self.master_seed.to_bytes(8, "little") + self.sample_id.encode("utf-8")
        ).digest()
        seq = np.random.SeedSequence(int.from_bytes(digest, "little"))
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def random(self) -> float:
        return float(self.gen.random())

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        return int(self.gen.integers(lo, hi + 1))

    def uniform(self, lo: float, hi: float) -> float:
        return float(self.gen.uniform(lo, hi)) if hi > lo else float(lo)

    def categorical(self, weights: Sequence[float]) -> int:
        w = np.asarray(weights, dtype=float)
        u = self.random() * w.sum()
        acc = 0.0
        for i, x in enumerate(w):
            acc += x
            if u < acc:
                return i
        # u landed on the float tail; return the last positive weight
        return int(np.flatnonzero(w > 0)[-1])

    def child(self, suffix: str) -> "RngStream":
        return RngStream(self.master_seed, f"{self.sample_id}{suffix}")


def derive_stream(master_seed: int, sample_id: str) -> RngStream:
    return RngStream(master_seed, sample_id)


def exec_stream(master_seed: int, sample_id: str, item_index: int) -> RngStream:
    return RngStream(master_seed, f"{sample_id}#exec{item_index}")


# -- primitive draws ----------------------------------------------------------


def sample_parameter(spec: ParamSpec, rng: RngStream, bounds: Sequence | None = None) -> Any:
    """Draw one value for ``spec``; ``bounds`` overrides a range spec's bounds."""
    kind = spec.kind
    if kind in ("integer-range", "real-range"):
        lo, hi = bounds if bounds is not None else spec.bounds
        if kind == "integer-range":
            draw = lambda: rng.integers(int(lo), int(hi))  # noqa: E731
        else:
            draw = lambda: rng.uniform(float(lo), float(hi))  # noqa: E731
        if spec.count > 1:
            return [draw() for _ in range(spec.count)]
        return draw()
    if kind == "categorical":
        return spec.values[rng.integers(0, len(spec.values) - 1)]
    if kind == "color-range":
        return [rng.integers(int(lo), int(hi)) for lo, hi in spec.channels]
    return _thaw(spec.value)


def select_exclusive_variant(group: VariantGroup, rng: RngStream) -> OperationVariant | None:
    """Pick one variant with probability equal to its frequency, else None."""
    u = rng.random()
    acc = 0.0
    for v in group.variants:
        acc += v.frequency
        if u < acc:
            return v
    return None


def select_postprocessing_subset(
    steps: Sequence[StepSpec], post_scale: float, rng: RngStream
) -> list[tuple[VariantGroup, OperationVariant]]:
    """Independent inclusion per group at ``post_scale * group mass``.

    Included groups then pick a variant in proportion to member frequencies.
    Output follows table order.
    """
    if not (0.0 < post_scale <= 1.0):
        raise SamplingError(f"post_scale {post_scale} outside (0, 1]")
    chosen = []
    for step in steps:
        for group in step.groups:
            mass = group.mass
            if mass <= 0:
                rng.random()
                continue
            if rng.random() < post_scale * mass:
                idx = rng.categorical([v.frequency for v in group.variants])
                chosen.append((group, group.variants[idx]))
    return chosen


# -- plans ---------------------------------------------------------------------


@dataclass
class ResolvedOp:
    op_id: str
    variant: str
    phase: str
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"op_id": self.op_id, "variant": self.variant, "phase": self.phase, "params": self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "ResolvedOp":
        return cls(d["op_id"], d["variant"], d["phase"], dict(d.get("params", {})))


@dataclass
class PlanItem:
    """One tampering operation on one region; the sampled configuration for it."""

    index: int
    type_id: str
    target: Rect | None
    target_id: str | None
    ops: list[ResolvedOp]
    source_rect: Rect | None = None
    source_id: str | None = None  # region id of the copied text
    source_image: str | None = None  # splicing only
    paste_mode: str | None = None
    paste_offset: tuple[int, int] | None = None
    text: str | None = None
    color_ref: Rect | None = None
    blank_size: tuple[int, int] | None = None

    def op(self, *variants: str) -> ResolvedOp | None:
        for o in self.ops:
            if o.variant in variants:
                return o
        return None

    def op_at(self, op_id: str) -> ResolvedOp | None:
        for o in self.ops:
            if o.op_id == op_id:
                return o
        return None

    @property
    def post_ops(self) -> list[ResolvedOp]:
        return [o for o in self.ops if o.phase == "post"]

    def to_dict(self) -> dict:
        r = lambda x: None if x is None else x.to_list()  # noqa: E731
        return {
            "index": self.index,
            "type_id": self.type_id,
            "target": r(self.target),
            "target_id": self.target_id,
            "source_rect": r(self.source_rect),
            "source_id": self.source_id,
            "source_image": self.source_image,
            "paste_mode": self.paste_mode,
            "paste_offset": None if self.paste_offset is None else list(self.paste_offset),
            "text": self.text,
            "color_ref": r(self.color_ref),
            "blank_size": None if self.blank_size is None else list(self.blank_size),
            "ops": [o.to_dict() for o in self.ops],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanItem":
        r = lambda x: None if x is None else Rect.from_list(x)  # noqa: E731
        return cls(
            index=int(d["index"]),
            type_id=d["type_id"],
            target=r(d.get("target")),
            target_id=d.get("target_id"),
            ops=[ResolvedOp.from_dict(o) for o in d["ops"]],
            source_rect=r(d.get("source_rect")),
            source_id=d.get("source_id"),
            source_image=d.get("source_image"),
            paste_mode=d.get("paste_mode"),
            paste_offset=None if d.get("paste_offset") is None else tuple(d["paste_offset"]),
            text=d.get("text"),
            color_ref=r(d.get("color_ref")),
            blank_size=None if d.get("blank_size") is None else tuple(d["blank_size"]),
        )


@dataclass
class TamperingPlan:
    sample_id: str
    items: list[PlanItem]

    @property
    def region_count(self) -> int:
        return len(self.items)

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "region_count": self.region_count, "items": [i.to_dict() for i in self.items]}

    @classmethod
    def from_dict(cls, d: dict) -> "TamperingPlan":
        return cls(d["sample_id"], [PlanItem.from_dict(i) for i in d["items"]])


@dataclass(frozen=True)
class SourceRef:
    """A splicing donor: image id and its annotated regions."""

    image_id: str
    regions: tuple[RegionAnnotation, ...]


def _char_count(region: RegionAnnotation) -> int:
    if region.text:
        return len(region.text)
    return max(1, int(round(region.rect.w / (0.55 * region.rect.h))))


def _char_crop(region: RegionAnnotation, n_chars: int, rng: RngStream) -> Rect:
    """Sub-rectangle holding ``n_chars`` consecutive characters of the region."""
    total = _char_count(region)
    k = min(n_chars, total)
    start = rng.integers(0, total - k)
    r = region.rect
    x0 = r.x + (start * r.w) // total
    x1 = r.x + -(-((start + k) * r.w) // total)
    return Rect(x0, r.y, max(1, x1 - x0), r.h)


def _resolve_variant(type_id: str, variant: OperationVariant, phase: str, rng: RngStream, model: PopulationModel) -> ResolvedOp:
    params = {}
    for p in variant.params:
        bounds = model.param_overrides.get((type_id, variant.op_id, variant.name, p.name))
        params[p.name] = sample_parameter(p, rng, bounds)
    return ResolvedOp(variant.op_id, variant.name, phase, params)


def _random_text(n: int, rng: RngStream) -> str:
    return "".join(TEXT_ALPHABET[rng.integers(0, len(TEXT_ALPHABET) - 1)] for _ in range(n))


def _nearest(regions: Sequence[RegionAnnotation], rect: Rect) -> RegionAnnotation | None:
    if not regions:
        return None
    cx, cy = rect.center
    return min(regions, key=lambda r: ((r.rect.center[0] - cx) ** 2 + (r.rect.center[1] - cy) ** 2, r.id))


def sample_plan(
    model: PopulationModel,
    table: ParameterTable,
    regions: Sequence[RegionAnnotation],
    rng: RngStream,
    source_pool: Sequence[SourceRef] = (),
    image_id: str | None = None,
) -> TamperingPlan:
    """Sample a complete tampering plan for one image.

    The region count is uniform over [1, min(12, len(regions))]. Each item
    draws its type from the model's normalised weights, then claims an unused
    region of the kind that type needs: non-text for insertion (falling back
    to a blank window found at execution time), text for the rest (falling
    back to any unused region).
    """
    if not regions:
        raise SamplingError("empty region list")
    weights = model.weight_vector()
    if (weights < 0).any() or weights.sum() <= 0:
        raise SamplingError("model type weights must be nonnegative with positive sum")
    weights = weights / weights.sum()

    regions = list(regions)
    text_regions = [r for r in regions if r.is_text]
    n_items = rng.integers(1, min(MAX_REGIONS, len(regions)))
    used: set[str] = set()
    items: list[PlanItem] = []

    for index in range(n_items):
        type_id = TYPE_IDS[rng.categorical(weights)]
        spec = table.type_spec(type_id)

        if type_id == "insertion":
            pool = [r for r in regions if not r.is_text and r.id not in used]
        else:
            pool = [r for r in text_regions if r.id not in used] or [r for r in regions if r.id not in used]
        region = pool[rng.integers(0, len(pool) - 1)] if pool else None
        if region is not None:
            used.add(region.id)

        ops: list[ResolvedOp] = []
        for step in spec.steps:
            if step.phase != "main":
                continue
            for group in step.groups:
                v = select_exclusive_variant(group, rng)
                if v is not None:
                    ops.append(_resolve_variant(type_id, v, "main", rng, model))
        post_steps = [s for s in spec.steps if s.phase == "post"]
        for group, v in select_postprocessing_subset(post_steps, table.post_scale, rng) if post_steps else []:
            ops.append(_resolve_variant(type_id, v, "post", rng, model))

        # the plan's actual region count is the resolved region quantity
        for o in ops:
            if "region_quantity" in o.params:
                o.params["region_quantity"] = n_items

        item = PlanItem(
            index=index,
            type_id=type_id,
            target=None if region is None else region.rect,
            target_id=None if region is None else region.id,
            ops=ops,
        )
        n_chars = next((o.params["text_length"] for o in ops if "text_length" in o.params), 1)

        if type_id == "copy-move":
            mode = item.op("paste-target-selection").params["target_region"]
            others = [r for r in text_regions if r.id != item.target_id]
            if mode == "text-region" and others:
                src = others[rng.integers(0, len(others) - 1)]
            else:
                mode = "nearby-9-grid"
                src = region
                item.paste_offset = NEIGHBOR_OFFSETS[rng.integers(0, len(NEIGHBOR_OFFSETS) - 1)]
            item.paste_mode = mode
            item.source_id = src.id
            item.source_rect = _char_crop(src, n_chars, rng)
        elif type_id == "splicing":
            donors = [s for s in source_pool if s.image_id != image_id and s.regions]
            if donors:
                donor = donors[rng.integers(0, len(donors) - 1)]
                cands = [r for r in donor.regions if r.is_text] or list(donor.regions)
                src = cands[rng.integers(0, len(cands) - 1)]
                item.source_image = donor.image_id
                item.source_id = src.id
                item.source_rect = _char_crop(src, n_chars, rng)
            item.paste_mode = "text-region"
        elif type_id == "removal":
            item.target = _char_crop(region, n_chars, rng)
        elif type_id in ("insertion", "replacement"):
            item.text = _random_text(n_chars, rng)
            if type_id == "replacement":
                item.color_ref = region.rect
            else:
                anchor = region.rect if region is not None else None
                ref = _nearest(text_regions, anchor) if anchor is not None else (text_regions[0] if text_regions else None)
                item.color_ref = None if ref is None else ref.rect
                if region is None:
                    hs = sorted(r.rect.h for r in text_regions) or [16]
                    ws = sorted(r.rect.w for r in text_regions) or [64]
                    item.blank_size = (ws[len(ws) // 2], hs[len(hs) // 2])
        items.append(item)

    return TamperingPlan(rng.sample_id, items)


def resolved_values_ok(item: PlanItem, table: ParameterTable, model: PopulationModel | None = None) -> list[str]:
    """Bounds check of every resolved parameter against its spec."""
    problems = []
    spec = table.type_spec(item.type_id)
    for o in item.ops:
        variant = spec.group(o.op_id).variant(o.variant)
        for p in variant.params:
            val = o.params.get(p.name)
            if p.name == "region_quantity":
                ok = isinstance(val, int) and p.bounds[0] <= val <= p.bounds[1]
            else:
                check = p
                if model is not None and (item.type_id, o.op_id, o.variant, p.name) in model.param_overrides:
                    check = dataclasses.replace(p, bounds=tuple(model.param_overrides[(item.type_id, o.op_id, o.variant, p.name)]))
                ok = check.contains(val)
            if not ok:
                problems.append(f"item {item.index} {o.op_id}/{o.variant}.{p.name}={val!r}")
    return problems
