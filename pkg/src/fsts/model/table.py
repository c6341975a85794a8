"""Tampering parameter tables.

A table describes, for each of the five tampering types, the ordered editing
steps, the mutually exclusive operation variants inside each step, the
parameters each variant takes, and how often each variant is used.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterator

import yaml

TYPE_IDS: tuple[str, ...] = ("copy-move", "splicing", "removal", "insertion", "replacement")
PARAM_KINDS = ("integer-range", "real-range", "categorical", "color-range", "fixed")
PHASES = ("main", "post")
FORMAT_VERSION = 1
SUM_TOL = 1e-6

_OP_ID_RE = re.compile(r"^\d+\.\d+$")


class TableError(ValueError):
    """Raised when a parameter table cannot be parsed or fails validation."""


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    bounds: tuple | None = None
    values: tuple | None = None
    channels: tuple | None = None
    value: Any = None
    unit: str | None = None
    count: int = 1

    def contains(self, resolved: Any) -> bool:
        """True if ``resolved`` is a value this spec could have produced."""
        if self.count > 1 and self.kind in ("integer-range", "real-range"):
            if not isinstance(resolved, (list, tuple)) or len(resolved) != self.count:
                return False
            return all(self._scalar_ok(v) for v in resolved)
        return self._scalar_ok(resolved)

    def _scalar_ok(self, v: Any) -> bool:
        if self.kind == "integer-range":
            return isinstance(v, int) and not isinstance(v, bool) and self.bounds[0] <= v <= self.bounds[1]
        if self.kind == "real-range":
            return isinstance(v, (int, float)) and self.bounds[0] <= v <= self.bounds[1]
        if self.kind == "categorical":
            return v in self.values
        if self.kind == "color-range":
            if not isinstance(v, (list, tuple)) or len(v) != 3:
                return False
            return all(lo <= c <= hi for c, (lo, hi) in zip(v, self.channels))
        return _freeze(v) == self.value


@dataclass(frozen=True)
class OperationVariant:
    op_id: str
    name: str
    frequency: float
    params: tuple[ParamSpec, ...] = ()
    label: str = ""

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class VariantGroup:
    op_id: str
    variants: tuple[OperationVariant, ...]

    @property
    def mass(self) -> float:
        return sum(v.frequency for v in self.variants)

    @property
    def residual_none(self) -> float:
        return max(0.0, 1.0 - self.mass)

    def variant(self, name: str) -> OperationVariant:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(f"{self.op_id}: no variant {name!r}")


@dataclass(frozen=True)
class StepSpec:
    index: int
    name: str
    phase: str
    groups: tuple[VariantGroup, ...]

    @property
    def scaled(self) -> bool:
        # post-processing frequencies are multiplied by the table's post_scale
        return self.phase == "post"


@dataclass(frozen=True)
class TamperingTypeSpec:
    type_id: str
    steps: tuple[StepSpec, ...]

    def groups(self, phase: str | None = None) -> Iterator[VariantGroup]:
        for step in self.steps:
            if phase is None or step.phase == phase:
                yield from step.groups

    def group(self, op_id: str) -> VariantGroup:
        for g in self.groups():
            if g.op_id == op_id:
                return g
        raise KeyError(f"{self.type_id}: no group {op_id!r}")

    def step_of(self, op_id: str) -> StepSpec:
        for step in self.steps:
            if any(g.op_id == op_id for g in step.groups):
                return step
        raise KeyError(f"{self.type_id}: no group {op_id!r}")


@dataclass(frozen=True)
class ParameterTable:
    types: tuple[TamperingTypeSpec, ...]
    type_weights: tuple[float, ...] = field(default=(0.2,) * 5)
    post_scale: float = 0.3

    def type_spec(self, type_id: str) -> TamperingTypeSpec:
        for t in self.types:
            if t.type_id == type_id:
                return t
        raise KeyError(type_id)

    @property
    def type_ids(self) -> tuple[str, ...]:
        return tuple(t.type_id for t in self.types)

    def configured_rate(self, type_id: str, op_id: str, variant: str) -> float:
        """Probability that a sampled item of ``type_id`` uses ``variant``."""
        spec = self.type_spec(type_id)
        v = spec.group(op_id).variant(variant)
        scale = self.post_scale if spec.step_of(op_id).scaled else 1.0
        return scale * v.frequency


# -- parsing -----------------------------------------------------------------

_TOP_KEYS = {"format_version", "post_scale", "type_weights", "types"}
_TYPE_KEYS = {"steps"}
_STEP_KEYS = {"index", "name", "phase", "groups"}
_GROUP_KEYS = {"op_id", "variants"}
_VARIANT_KEYS = {"name", "label", "frequency", "params"}
_PARAM_KEYS = {"name", "kind", "bounds", "values", "channels", "value", "unit", "count"}


def _check_keys(node: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(node, dict):
        raise TableError(f"{where}: expected a mapping, got {type(node).__name__}")
    unknown = set(node) - allowed
    if unknown:
        raise TableError(f"{where}: unknown keys {sorted(unknown)}")
    return node


def _require(node: dict, key: str, where: str) -> Any:
    if key not in node:
        raise TableError(f"{where}: missing key {key!r}")
    return node[key]


def _parse_param(node: Any, where: str) -> ParamSpec:
    node = _check_keys(node, _PARAM_KEYS, where)
    kind = _require(node, "kind", where)
    if kind not in PARAM_KINDS:
        raise TableError(f"{where}: unknown parameter kind {kind!r}")
    return ParamSpec(
        name=str(_require(node, "name", where)),
        kind=kind,
        bounds=_freeze(node.get("bounds")),
        values=_freeze(node.get("values")),
        channels=_freeze(node.get("channels")),
        value=_freeze(node.get("value")),
        unit=node.get("unit"),
        count=int(node.get("count", 1)),
    )


def _parse_table_tree(tree: Any) -> ParameterTable:
    tree = _check_keys(tree, _TOP_KEYS, "table")
    version = tree.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise TableError(f"table: unsupported format_version {version!r}")
    types_node = _check_keys(_require(tree, "types", "table"), set(TYPE_IDS), "types")
    missing = [t for t in TYPE_IDS if t not in types_node]
    if missing:
        raise TableError(f"missing type: {', '.join(missing)}")

    types = []
    for type_id in TYPE_IDS:
        tnode = _check_keys(types_node[type_id], _TYPE_KEYS, f"types.{type_id}")
        steps = []
        for si, snode in enumerate(_require(tnode, "steps", f"types.{type_id}")):
            swhere = f"types.{type_id}.steps[{si}]"
            snode = _check_keys(snode, _STEP_KEYS, swhere)
            groups = []
            for gnode in _require(snode, "groups", swhere):
                gnode = _check_keys(gnode, _GROUP_KEYS, swhere + ".groups")
                op_id = str(_require(gnode, "op_id", swhere))
                gwhere = f"{swhere}.groups[{op_id}]"
                variants = []
                for vnode in _require(gnode, "variants", gwhere):
                    vnode = _check_keys(vnode, _VARIANT_KEYS, gwhere + ".variants")
                    vname = str(_require(vnode, "name", gwhere))
                    vwhere = f"{gwhere}.variants[{vname}]"
                    try:
                        freq = float(_require(vnode, "frequency", vwhere))
                    except (TypeError, ValueError):
                        raise TableError(f"{vwhere}.frequency: not a number") from None
                    params = tuple(
                        _parse_param(p, f"{vwhere}.params[{i}]")
                        for i, p in enumerate(vnode.get("params") or [])
                    )
                    variants.append(OperationVariant(op_id, vname, freq, params, str(vnode.get("label", ""))))
                groups.append(VariantGroup(op_id, tuple(variants)))
            steps.append(
                StepSpec(
                    index=int(_require(snode, "index", swhere)),
                    name=str(_require(snode, "name", swhere)),
                    phase=str(_require(snode, "phase", swhere)),
                    groups=tuple(groups),
                )
            )
        types.append(TamperingTypeSpec(type_id, tuple(steps)))

    weights_node = tree.get("type_weights") or {t: 0.2 for t in TYPE_IDS}
    _check_keys(weights_node, set(TYPE_IDS), "type_weights")
    weights = tuple(float(weights_node.get(t, 0.0)) for t in TYPE_IDS)
    return ParameterTable(tuple(types), weights, float(tree.get("post_scale", 0.3)))


def load_parameter_table(document: str) -> ParameterTable:
    """Parse and validate a table document.

    Raises :class:`TableError` on malformed input, unknown keys, a missing
    tampering type, or any invariant violation reported by
    :func:`validate_table`.
    """
    try:
        tree = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise TableError(f"parse failure: {exc}") from None
    table = _parse_table_tree(tree)
    violations = validate_table(table)
    if violations:
        raise TableError("; ".join(violations))
    return table


def load_parameter_table_file(path: str | Path) -> ParameterTable:
    return load_parameter_table(Path(path).read_text(encoding="utf-8"))


def default_table_text() -> str:
    return resources.files("fsts.data").joinpath("fsts-default.table").read_text(encoding="utf-8")


@functools.lru_cache(maxsize=1)
def default_table() -> ParameterTable:
    return load_parameter_table(default_table_text())


# -- validation --------------------------------------------------------------


def _param_violations(p: ParamSpec, where: str) -> list[str]:
    out = []
    if p.kind in ("integer-range", "real-range"):
        if p.bounds is None or len(p.bounds) != 2:
            out.append(f"{where}: range needs [lower, upper] bounds")
        elif p.bounds[0] > p.bounds[1]:
            out.append(f"{where}: lower bound exceeds upper bound")
        if p.count < 1:
            out.append(f"{where}: count must be >= 1")
    elif p.kind == "categorical":
        if not p.values:
            out.append(f"{where}: categorical values must be non-empty")
    elif p.kind == "color-range":
        chans = p.channels or ()
        if len(chans) != 3:
            out.append(f"{where}: color-range needs three channel ranges")
        for lo, hi in chans:
            if not (0 <= lo <= hi <= 255):
                out.append(f"{where}: channel range [{lo}, {hi}] outside [0, 255]")
    return out


def validate_table(table: ParameterTable) -> list[str]:
    """Return every invariant violation in ``table``; empty means valid.

    Each message starts with the dotted path of the offending field.
    """
    out: list[str] = []
    ids = [t.type_id for t in table.types]
    if sorted(ids) != sorted(TYPE_IDS) or len(ids) != len(TYPE_IDS):
        out.append(f"types: expected exactly {list(TYPE_IDS)}, got {ids}")
    if len(table.type_weights) != len(table.types):
        out.append("type_weights: length does not match types")
    for tid, w in zip(ids, table.type_weights):
        if w < 0:
            out.append(f"type_weights.{tid}: negative weight {w}")
    if not (0.0 < table.post_scale <= 1.0):
        out.append(f"post_scale: {table.post_scale} outside (0, 1]")

    for t in table.types:
        prev = None
        for step in t.steps:
            swhere = f"types.{t.type_id}.steps[{step.index}]"
            if prev is not None and step.index <= prev:
                out.append(f"{swhere}.index: step indices must be strictly increasing")
            prev = step.index
            if step.phase not in PHASES:
                out.append(f"{swhere}.phase: unknown phase {step.phase!r}")
            seen: set[str] = set()
            for g in step.groups:
                gwhere = f"{swhere}.groups[{g.op_id}]"
                if g.op_id in seen:
                    out.append(f"{gwhere}: duplicate op_id {g.op_id}")
                seen.add(g.op_id)
                if not _OP_ID_RE.match(g.op_id):
                    out.append(f"{gwhere}: op_id {g.op_id!r} does not match <digit>.<digit>")
                elif int(g.op_id.split(".")[0]) != step.index:
                    out.append(f"{gwhere}: op_id {g.op_id} does not belong to step {step.index}")
                if not g.variants:
                    out.append(f"{gwhere}: group has no variants")
                names = [v.name for v in g.variants]
                if len(set(names)) != len(names):
                    out.append(f"{gwhere}: duplicate variant names")
                for v in g.variants:
                    vwhere = f"{gwhere}.variants[{v.name}]"
                    if v.op_id != g.op_id:
                        out.append(f"{vwhere}.op_id: {v.op_id} differs from group {g.op_id}")
                    if not (0.0 <= v.frequency <= 1.0):
                        out.append(f"{vwhere}.frequency: frequency outside [0,1] ({v.frequency})")
                    pnames = [p.name for p in v.params]
                    if len(set(pnames)) != len(pnames):
                        out.append(f"{vwhere}.params: duplicate parameter names")
                    for p in v.params:
                        out.extend(_param_violations(p, f"{vwhere}.params[{p.name}]"))
                if g.mass > 1.0 + SUM_TOL:
                    out.append(f"{gwhere}: group sum > 1 ({g.mass:.6f})")
    return out


# -- serialization -----------------------------------------------------------


def _param_tree(p: ParamSpec) -> dict:
    node: dict[str, Any] = {"name": p.name, "kind": p.kind}
    for key in ("bounds", "values", "channels"):
        val = getattr(p, key)
        if val is not None:
            node[key] = _thaw(val)
    if p.kind == "fixed":
        node["value"] = _thaw(p.value)
    if p.unit is not None:
        node["unit"] = p.unit
    if p.count != 1:
        node["count"] = p.count
    return node


def table_to_tree(table: ParameterTable) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "post_scale": table.post_scale,
        "type_weights": {t.type_id: w for t, w in zip(table.types, table.type_weights)},
        "types": {
            t.type_id: {
                "steps": [
                    {
                        "index": s.index,
                        "name": s.name,
                        "phase": s.phase,
                        "groups": [
                            {
                                "op_id": g.op_id,
                                "variants": [
                                    {
                                        "name": v.name,
                                        "label": v.label,
                                        "frequency": v.frequency,
                                        "params": [_param_tree(p) for p in v.params],
                                    }
                                    for v in g.variants
                                ],
                            }
                            for g in s.groups
                        ],
                    }
                    for s in t.steps
                ]
            }
            for t in table.types
        },
    }


def serialize_table(table: ParameterTable) -> str:
    return yaml.safe_dump(table_to_tree(table), sort_keys=False, allow_unicode=True)
