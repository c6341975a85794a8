"""Synthetic editing logs drawn from a known model, for fitting tests.

A simulated tamperer picks each sample's type from the given weights, then
uses every group of that type with its table frequency, main and
post-processing alike. Log frequencies are raw usage shares, so no post
scaling applies here.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from ..model.fit import EditLogRecord, _as_vector
from ..model.table import TYPE_IDS, ParameterTable
from ..sampler import derive_stream, sample_parameter, select_exclusive_variant


def simulate_edit_logs(
    table: ParameterTable,
    weights: Sequence[float] | Mapping[str, float],
    n_individuals: int,
    samples_per_individual: int,
    seed: int,
) -> list[EditLogRecord]:
    w = _as_vector(weights)
    w = w / w.sum()
    records = []
    for i in range(n_individuals):
        tid = f"tamperer{i:03d}"
        rng = derive_stream(seed, f"logs/{tid}")
        for j in range(samples_per_individual):
            sid = f"{tid}-s{j:04d}"
            type_id = TYPE_IDS[rng.categorical(w)]
            for step in table.type_spec(type_id).steps:
                for group in step.groups:
                    v = select_exclusive_variant(group, rng)
                    if v is None:
                        continue
                    params = {p.name: sample_parameter(p, rng) for p in v.params}
                    records.append(EditLogRecord(tid, sid, type_id, v.op_id, v.name, params))
    return records
