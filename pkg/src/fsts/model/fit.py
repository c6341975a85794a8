"""Fitting individual and population tampering models from editing logs.

Each tamperer's behaviour is summarised per tampering type by a usage weight
and, for every variant group, the most frequent variant that clears a
minimum-usage threshold. Population models pool those summaries: type weights
are summed and renormalised, and a variant becomes the population's
representative when enough individuals share it.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .table import FORMAT_VERSION, TYPE_IDS, ParameterTable

INDIVIDUAL_THRESHOLD = 0.02
POPULATION_THRESHOLD = 0.05
# shares are ratios of small integers; this keeps 1/50 >= 0.02 exact
_EPS = 1e-9


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class EditLogRecord:
    tamperer_id: str
    sample_id: str
    type_id: str
    op_id: str
    variant: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tamperer_id", "sample_id", "type_id", "op_id", "variant"):
            if not getattr(self, name):
                raise FitError(f"edit log record: empty {name}")
        if self.type_id not in TYPE_IDS:
            raise FitError(f"edit log record: unknown type_id {self.type_id!r}")


# nested mapping shapes used below:
#   retained[type][op_id][variant] -> share
#   representatives[type][op_id] -> variant
#   param_stats[type][op_id][variant][param] -> {"min", "max", "mode"}


@dataclass(frozen=True)
class IndividualModel:
    tamperer_id: str
    weights: dict[str, float]
    n_samples: int
    retained: dict[str, dict[str, dict[str, float]]]
    representatives: dict[str, dict[str, str]]
    param_stats: dict[str, dict[str, dict[str, dict[str, dict]]]]
    threshold: float = INDIVIDUAL_THRESHOLD


@dataclass(frozen=True)
class PopulationModel:
    weights: dict[str, float]
    representatives: dict[str, dict[str, str]] = field(default_factory=dict)
    retained: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    param_stats: dict[str, dict[str, dict[str, dict[str, dict]]]] = field(default_factory=dict)
    n_individuals: int = 0
    n_samples: int = 0
    threshold: float = POPULATION_THRESHOLD
    # (type, op_id, variant, param) -> (lo, hi); replaces the table range when sampling
    param_overrides: dict[tuple[str, str, str, str], tuple] = field(default_factory=dict)

    @classmethod
    def from_table(cls, table: ParameterTable) -> "PopulationModel":
        w = np.asarray(table.type_weights, dtype=float)
        w = w / w.sum()
        return cls(weights={t: float(x) for t, x in zip(table.type_ids, w)})

    @classmethod
    def from_weights(cls, weights: Sequence[float] | Mapping[str, float]) -> "PopulationModel":
        vec = _as_vector(weights)
        if (vec < 0).any() or vec.sum() <= 0:
            raise FitError("type weights must be nonnegative with positive sum")
        vec = vec / vec.sum()
        return cls(weights={t: float(x) for t, x in zip(TYPE_IDS, vec)})

    def weight_vector(self) -> np.ndarray:
        return _as_vector(self.weights)


def _as_vector(a: Sequence[float] | Mapping[str, float]) -> np.ndarray:
    if isinstance(a, Mapping):
        return np.array([float(a.get(t, 0.0)) for t in TYPE_IDS])
    return np.asarray(a, dtype=float)


def coefficient_distance(a, a_hat) -> float:
    """Total variation distance between two coefficient vectors.

    Both vectors are normalised to sum 1 first, so the result lies in [0, 1].
    Accepts sequences or mappings keyed by type id.
    """
    x, y = _as_vector(a), _as_vector(a_hat)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if (x < 0).any() or (y < 0).any():
        raise ValueError("coefficients must be nonnegative")
    sx, sy = x.sum(), y.sum()
    if sx <= 0 or sy <= 0:
        raise ValueError("all-zero coefficient vector")
    return float(0.5 * np.abs(x / sx - y / sy).sum())


def _check_threshold(threshold: float) -> None:
    if not (0.0 < threshold < 1.0):
        raise FitError(f"threshold {threshold} outside (0, 1)")


def _stat_key(value: Any) -> str:
    return json.dumps(value, sort_keys=True)


def _summarise(values: list) -> dict:
    counts = Counter(_stat_key(v) for v in values)
    top = max(counts.values())
    mode = json.loads(min(k for k, c in counts.items() if c == top))
    out: dict[str, Any] = {"mode": mode, "min": None, "max": None}
    nums = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if nums and len(nums) == len(values):
        out["min"], out["max"] = min(nums), max(nums)
    return out


def _pick(shares: Mapping[str, float], threshold: float) -> tuple[dict[str, float], str | None]:
    kept = {v: s for v, s in shares.items() if s >= threshold - _EPS}
    if not kept:
        return kept, None
    # highest share wins; ties go to the lexically first name
    rep = min(kept, key=lambda v: (-kept[v], v))
    return kept, rep


def fit_individual(logs: Iterable[EditLogRecord], threshold: float = INDIVIDUAL_THRESHOLD) -> IndividualModel:
    """Summarise one tamperer's logs into per-type weights and representatives."""
    logs = list(logs)
    if not logs:
        raise FitError("empty logs")
    _check_threshold(threshold)
    tamperers = {r.tamperer_id for r in logs}
    if len(tamperers) != 1:
        raise FitError(f"logs mix tamperers: {sorted(tamperers)}")

    sample_type: dict[str, str] = {}
    for r in logs:
        prev = sample_type.setdefault(r.sample_id, r.type_id)
        if prev != r.type_id:
            raise FitError(f"sample {r.sample_id} logged under two types ({prev}, {r.type_id})")

    type_counts = Counter(sample_type.values())
    n = len(sample_type)
    weights = {t: type_counts.get(t, 0) / n for t in TYPE_IDS}

    usage: dict[str, dict[str, dict[str, set]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(set)))
    values: dict = defaultdict(lambda: defaultdict(list))
    for r in logs:
        usage[r.type_id][r.op_id][r.variant].add(r.sample_id)
        for k, v in r.params.items():
            values[(r.type_id, r.op_id, r.variant)][k].append(v)

    retained: dict = {}
    reps: dict = {}
    stats: dict = {}
    for t in TYPE_IDS:
        if t not in usage:
            continue
        for op_id in sorted(usage[t]):
            shares = {v: len(ids) / type_counts[t] for v, ids in usage[t][op_id].items()}
            kept, rep = _pick(shares, threshold)
            if not kept:
                continue
            retained.setdefault(t, {})[op_id] = kept
            reps.setdefault(t, {})[op_id] = rep
            for v in kept:
                pvals = values.get((t, op_id, v), {})
                stats.setdefault(t, {}).setdefault(op_id, {})[v] = {k: _summarise(vs) for k, vs in sorted(pvals.items())}

    return IndividualModel(logs[0].tamperer_id, weights, n, retained, reps, stats, threshold)


def _merge_stats(parts: list[dict]) -> dict:
    merged: dict = {}
    for name in sorted({k for p in parts for k in p}):
        entries = [p[name] for p in parts if name in p]
        modes = Counter(_stat_key(e["mode"]) for e in entries)
        top = max(modes.values())
        out = {"mode": json.loads(min(k for k, c in modes.items() if c == top)), "min": None, "max": None}
        if all(e["min"] is not None for e in entries):
            out["min"] = min(e["min"] for e in entries)
            out["max"] = max(e["max"] for e in entries)
        merged[name] = out
    return merged


def aggregate_population(models: Sequence[IndividualModel], threshold: float = POPULATION_THRESHOLD) -> PopulationModel:
    """Pool individual models into a population model.

    Type weights are summed over individuals and renormalised. A variant is
    retained for a group when at least ``threshold`` of all individuals chose
    it as their representative; the most widely shared one becomes the
    population representative.
    """
    models = list(models)
    if not models:
        raise FitError("empty input: no individual models")
    _check_threshold(threshold)

    total = np.zeros(len(TYPE_IDS))
    for m in models:
        total += _as_vector(m.weights)
    if total.sum() <= 0:
        raise FitError("individual weights are all zero")
    total /= total.sum()
    weights = {t: float(x) for t, x in zip(TYPE_IDS, total)}

    n_ind = len(models)
    votes: dict = defaultdict(lambda: defaultdict(Counter))
    for m in models:
        for t, groups in m.representatives.items():
            for op_id, v in groups.items():
                votes[t][op_id][v] += 1

    retained: dict = {}
    reps: dict = {}
    stats: dict = {}
    for t in TYPE_IDS:
        for op_id in sorted(votes.get(t, {})):
            shares = {v: c / n_ind for v, c in votes[t][op_id].items()}
            kept, rep = _pick(shares, threshold)
            if not kept:
                continue
            retained.setdefault(t, {})[op_id] = kept
            reps.setdefault(t, {})[op_id] = rep
            for v in kept:
                parts = [
                    m.param_stats[t][op_id][v]
                    for m in models
                    if m.representatives.get(t, {}).get(op_id) == v
                ]
                stats.setdefault(t, {}).setdefault(op_id, {})[v] = _merge_stats(parts)

    return PopulationModel(
        weights=weights,
        representatives=reps,
        retained=retained,
        param_stats=stats,
        n_individuals=n_ind,
        n_samples=sum(m.n_samples for m in models),
        threshold=threshold,
    )


def fit_population(
    logs: Iterable[EditLogRecord],
    individual_threshold: float = INDIVIDUAL_THRESHOLD,
    population_threshold: float = POPULATION_THRESHOLD,
) -> tuple[PopulationModel, list[IndividualModel]]:
    by_tamperer: dict[str, list[EditLogRecord]] = defaultdict(list)
    for r in logs:
        by_tamperer[r.tamperer_id].append(r)
    if not by_tamperer:
        raise FitError("empty logs")
    individuals = [fit_individual(by_tamperer[k], individual_threshold) for k in sorted(by_tamperer)]
    return aggregate_population(individuals, population_threshold), individuals


# -- model files -------------------------------------------------------------


def model_to_tree(model: PopulationModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "population-model",
        "threshold": model.threshold,
        "provenance": {"individuals": model.n_individuals, "samples": model.n_samples},
        "type_weights": dict(model.weights),
        "representatives": model.representatives,
        "retained": model.retained,
        "param_stats": model.param_stats,
        "param_overrides": [
            {"type": t, "op_id": o, "variant": v, "param": p, "bounds": list(b)}
            for (t, o, v, p), b in sorted(model.param_overrides.items())
        ],
    }


def serialize_model(model: PopulationModel) -> str:
    return yaml.safe_dump(model_to_tree(model), sort_keys=False, allow_unicode=True)


def load_model(document: str) -> PopulationModel:
    tree = yaml.safe_load(document)
    if not isinstance(tree, dict) or tree.get("format_version") != FORMAT_VERSION:
        raise FitError("model file: missing or unsupported format_version")
    if tree.get("kind", "population-model") != "population-model":
        raise FitError(f"model file: unexpected kind {tree.get('kind')!r}")
    weights = tree.get("type_weights") or {}
    unknown = set(weights) - set(TYPE_IDS)
    if unknown:
        raise FitError(f"model file: unknown type ids {sorted(unknown)}")
    prov = tree.get("provenance") or {}
    overrides = {
        (o["type"], o["op_id"], o["variant"], o["param"]): tuple(o["bounds"])
        for o in tree.get("param_overrides") or []
    }
    return PopulationModel(
        weights={t: float(weights.get(t, 0.0)) for t in TYPE_IDS},
        representatives=tree.get("representatives") or {},
        retained=tree.get("retained") or {},
        param_stats=tree.get("param_stats") or {},
        n_individuals=int(prov.get("individuals", 0)),
        n_samples=int(prov.get("samples", 0)),
        threshold=float(tree.get("threshold", POPULATION_THRESHOLD)),
        param_overrides=overrides,
    )


def load_model_file(path: str | Path) -> PopulationModel:
    return load_model(Path(path).read_text(encoding="utf-8"))


def write_model_file(model: PopulationModel, path: str | Path) -> None:
    Path(path).write_text(serialize_model(model), encoding="utf-8")
