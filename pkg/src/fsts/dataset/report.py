"""Empirical operation frequencies against the configured table.

For every variant group the report counts which variant each plan item of
that type resolved to (or none), attaches 95 % Wilson intervals, and runs a
chi-square goodness-of-fit test against the configured probabilities. Post
groups are compared with ``post_scale * frequency``, which is the actual
sampling probability of each member. A group is only tested when every
expected cell count is at least 5; below that the chi-square approximation
does not hold and the p value is left empty.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binomtest, chisquare

from ..model.table import ParameterTable
from .metrics import pixel_auc, pixel_f1

NONE = "(none)"
TOP_N = 8
MIN_EXPECTED = 5.0
PROB_EPS = 1e-9


@dataclass
class VariantRow:
    variant: str
    label: str
    count: int
    share: float
    ci_low: float
    ci_high: float
    configured: float


@dataclass
class GroupRow:
    type_id: str
    op_id: str
    phase: str
    n: int
    rows: list[VariantRow]
    chi2: float | None = None
    p_value: float | None = None
    max_abs_dev: float = 0.0


@dataclass
class UsageRow:
    type_id: str
    op_id: str
    variant: str
    label: str
    share: float


@dataclass
class MetricsReport:
    n_records: int
    type_counts: dict[str, int]
    groups: list[GroupRow]
    top_operations: dict[str, list[UsageRow]] = field(default_factory=dict)
    per_sample: list[dict] = field(default_factory=list)
    aggregate: dict[str, float | None] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def failing_groups(self, alpha: float = 0.001) -> list[GroupRow]:
        return [g for g in self.groups if g.p_value is not None and g.p_value <= alpha]


def _items(records) -> list:
    out = []
    for r in records:
        plan = getattr(r, "plan", r)
        out.extend(plan.items)
    return out


def _wilson(k: int, n: int) -> tuple[float, float]:
    if n < 2:
        s = k / n if n else 0.0
        return s, s
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def group_test(counts: Sequence[int], probs: Sequence[float]) -> tuple[float | None, float | None]:
    """Chi-square goodness of fit; None when there is nothing to test."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    if n < 2:
        return None, None
    keep = probs > PROB_EPS  # residual shares of ~1e-16 are structural zeros
    if counts[~keep].sum() > 0:
        return float("inf"), 0.0
    if keep.sum() < 2:
        return None, None
    p = probs[keep] / probs[keep].sum()
    if (n * p).min() < MIN_EXPECTED:
        return None, None
    res = chisquare(counts[keep], n * p)
    return float(res.statistic), float(res.pvalue)


def frequency_report(records, table: ParameterTable, types: Iterable[str] | None = None) -> MetricsReport:
    items = _items(records)
    wanted = set(types) if types is not None else set(table.type_ids)
    items = [i for i in items if i.type_id in wanted]
    by_type: dict[str, list] = defaultdict(list)
    for it in items:
        by_type[it.type_id].append(it)

    groups = []
    for t in table.type_ids:
        if t not in wanted or not by_type.get(t):
            continue
        spec = table.type_spec(t)
        its = by_type[t]
        n = len(its)
        for step in spec.steps:
            scale = table.post_scale if step.phase == "post" else 1.0
            for g in step.groups:
                chosen = Counter()
                for it in its:
                    op = it.op_at(g.op_id)
                    chosen[op.variant if op is not None else NONE] += 1
                rows = []
                probs, counts = [], []
                for v in g.variants:
                    k = chosen.get(v.name, 0)
                    lo, hi = _wilson(k, n)
                    rows.append(VariantRow(v.name, v.label, k, k / n, lo, hi, scale * v.frequency))
                    probs.append(scale * v.frequency)
                    counts.append(k)
                k = chosen.get(NONE, 0)
                p_none = max(0.0, 1.0 - sum(probs))
                lo, hi = _wilson(k, n)
                rows.append(VariantRow(NONE, "none", k, k / n, lo, hi, p_none))
                probs.append(p_none)
                counts.append(k)
                chi2, pv = group_test(counts, probs)
                dev = max(abs(r.share - r.configured) for r in rows)
                groups.append(GroupRow(t, g.op_id, step.phase, n, rows, chi2, pv, dev))

    type_counts = {t: len(by_type.get(t, [])) for t in table.type_ids if t in wanted}
    report = MetricsReport(len(records) if hasattr(records, "__len__") else len(items), type_counts, groups)
    for t in table.type_ids:
        if t in wanted and by_type.get(t):
            report.top_operations[t] = top_operations_from_items(by_type[t], table, t)
    return report


def _optional_variants(table: ParameterTable, type_id: str) -> dict[tuple[str, str], str]:
    """Variants of groups that involve a choice (mandatory steps excluded)."""
    out = {}
    for step in table.type_spec(type_id).steps:
        for g in step.groups:
            if len(g.variants) == 1 and g.variants[0].frequency >= 1.0:
                continue
            for v in g.variants:
                out[(g.op_id, v.name)] = v.label
    return out


def _rank(rows: list[UsageRow], n: int) -> list[UsageRow]:
    return sorted(rows, key=lambda r: (-r.share, r.op_id, r.variant))[:n]


def top_operations_from_items(items, table: ParameterTable, type_id: str, n: int = TOP_N) -> list[UsageRow]:
    optional = _optional_variants(table, type_id)
    used = Counter()
    total = 0
    for it in items:
        if it.type_id != type_id:
            continue
        total += 1
        for o in it.ops:
            if (o.op_id, o.variant) in optional:
                used[(o.op_id, o.variant)] += 1
    rows = [UsageRow(type_id, op, v, optional[(op, v)], used[(op, v)] / total) for (op, v) in optional if total]
    return _rank(rows, n)


def top_operations_from_logs(by_tamperer: dict, table: ParameterTable, type_id: str, n: int = TOP_N) -> list[UsageRow]:
    """Per-tamperer usage shares within ``type_id`` samples, averaged over
    tamperers who logged that type."""
    optional = _optional_variants(table, type_id)
    shares: dict[tuple[str, str], list[float]] = defaultdict(list)
    for recs in by_tamperer.values():
        samples = {r.sample_id for r in recs if r.type_id == type_id}
        if not samples:
            continue
        used: dict[tuple[str, str], set] = defaultdict(set)
        for r in recs:
            if r.type_id == type_id and (r.op_id, r.variant) in optional:
                used[(r.op_id, r.variant)].add(r.sample_id)
        for key in optional:
            shares[key].append(len(used.get(key, ())) / len(samples))
    rows = [UsageRow(type_id, op, v, optional[(op, v)], float(np.mean(s))) for (op, v), s in shares.items()]
    return _rank(rows, n)


def mask_scores(pairs) -> tuple[list[dict], dict[str, float | None]]:
    """Per-sample and mean F1/AUC over (sample_id, pred_scores, gt) triples.

    Predictions are binarised at 0.5 for F1 and used as raw scores for AUC.
    Samples whose ground truth has one class get no AUC.
    """
    per, f1s, aucs = [], [], []
    for sid, scores, gt in pairs:
        f1 = pixel_f1(scores >= 0.5, gt)
        try:
            auc = pixel_auc(scores, gt)
        except ValueError:
            auc = None
        per.append({"sample_id": sid, "f1": f1, "auc": auc})
        f1s.append(f1)
        if auc is not None:
            aucs.append(auc)
    agg = {"f1": float(np.mean(f1s)) if f1s else None, "auc": float(np.mean(aucs)) if aucs else None}
    return per, agg


# -- text renderings -------------------------------------------------------------


def _fmt(x: float | None, spec: str = ".4f") -> str:
    if x is None:
        return "-"
    return format(x, spec)


def format_text(report: MetricsReport) -> str:
    lines = [f"records: {report.n_records}", "items per type: " + ", ".join(f"{t}={c}" for t, c in report.type_counts.items()), ""]
    header = ["type", "op", "variant", "count", "share", "ci95", "configured", "chi2", "p"]
    table = [header]
    for g in report.groups:
        for i, r in enumerate(g.rows):
            first = i == 0
            table.append(
                [
                    g.type_id if first else "",
                    g.op_id if first else "",
                    r.variant,
                    str(r.count),
                    f"{100 * r.share:.2f}%",
                    f"[{100 * r.ci_low:.2f}, {100 * r.ci_high:.2f}]",
                    f"{100 * r.configured:.2f}%",
                    _fmt(g.chi2, ".2f") if first else "",
                    _fmt(g.p_value, ".4g") if first else "",
                ]
            )
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    for row in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    for t, rows in report.top_operations.items():
        lines += ["", f"top operations: {t}"]
        for r in rows:
            lines.append(f"  {r.op_id:<4} {r.label:<40} {100 * r.share:6.1f}%")
    if report.aggregate:
        lines += ["", "mask metrics: " + ", ".join(f"{k}={_fmt(v)}" for k, v in report.aggregate.items())]
    return "\n".join(lines) + "\n"


def top_operations_tsv(rows: Sequence[UsageRow]) -> str:
    out = ["type_id\top_id\tvariant\tlabel\tshare"]
    out += [f"{r.type_id}\t{r.op_id}\t{r.variant}\t{r.label}\t{r.share:.6f}" for r in rows]
    return "\n".join(out) + "\n"
