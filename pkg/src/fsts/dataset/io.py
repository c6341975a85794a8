"""Image, sample, manifest and edit-log I/O.

Output layout::

    out/
      images/{id}.png   tampered RGB
      masks/{id}.png    single channel, 0 or 255
      meta/{id}.json    sample record
      manifest.json

Edit logs are tab-separated lines
``tamperer_id  sample_id  type_id  op_id  variant  key=value;key=value``
where each value is read as JSON when it parses and as a plain string
otherwise. Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from ..model.fit import EditLogRecord, FitError

log = logging.getLogger(__name__)

LAYOUT_VERSION = 1
LOG_SUFFIXES = (".tsv", ".log", ".txt")


class LogFormatError(ValueError):
    pass


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def read_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def _png_bytes_to(path: Path, arr: np.ndarray) -> None:
    mode = "L" if arr.ndim == 2 else "RGB"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            Image.fromarray(arr, mode=mode).save(fh, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_image(path: str | Path, arr: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _png_bytes_to(path, np.ascontiguousarray(arr, dtype=np.uint8))


def _write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sample_paths(out_dir: str | Path, sample_id: str) -> dict[str, Path]:
    out = Path(out_dir)
    return {
        "image": out / "images" / f"{sample_id}.png",
        "mask": out / "masks" / f"{sample_id}.png",
        "meta": out / "meta" / f"{sample_id}.json",
    }


def write_sample(out_dir, sample_id: str, tampered: np.ndarray, mask: np.ndarray, record, overwrite: bool = False) -> dict[str, Path]:
    """Write one sample; each file lands via temp file + rename.

    The meta file goes last, so a sample with a meta file is complete.
    """
    paths = sample_paths(out_dir, sample_id)
    if not overwrite:
        existing = [str(p) for p in paths.values() if p.exists()]
        if existing:
            raise FileExistsError(f"sample {sample_id} already written ({existing[0]}); use overwrite")
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    try:
        _png_bytes_to(paths["image"], np.ascontiguousarray(tampered, dtype=np.uint8))
        _png_bytes_to(paths["mask"], np.where(mask, 255, 0).astype(np.uint8))
        text = record if isinstance(record, str) else record.to_json()
        _write_text(paths["meta"], text)
    except OSError as exc:
        raise OSError(f"writing sample {sample_id}: {exc.filename or ''} {exc.strerror or exc}") from exc
    return paths


def read_sample(out_dir, sample_id: str):
    from ..pipeline import SampleRecord

    paths = sample_paths(out_dir, sample_id)
    return (
        read_image(paths["image"]),
        read_mask(paths["mask"]),
        SampleRecord.from_json(paths["meta"].read_text(encoding="utf-8")),
    )


@dataclass
class DatasetManifest:
    sources: list[str]
    annotations: list[str]
    master_seed: int
    table: str
    model: str
    samples: list[str] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    layout_version: int = LAYOUT_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def write_manifest(out_dir, manifest: DatasetManifest) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_text(path, manifest.to_json())
    return path


def load_manifest(out_dir, check_paths: bool = False) -> DatasetManifest:
    path = Path(out_dir) / "manifest.json"
    m = DatasetManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    if check_paths:
        missing = [p for p in m.sources + m.annotations if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"manifest references missing path {missing[0]}")
    return m


# -- edit logs -----------------------------------------------------------------


def _parse_params(text: str, where: str) -> dict:
    params = {}
    if not text.strip():
        return params
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise LogFormatError(f"{where}: parameter {part!r} is not key=value")
        k, v = part.split("=", 1)
        try:
            params[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            params[k.strip()] = v
    return params


def parse_log_line(line: str, where: str) -> EditLogRecord:
    fields = line.rstrip("\n").split("\t")
    if len(fields) not in (5, 6):
        raise LogFormatError(f"{where}: expected 6 tab-separated fields, got {len(fields)}")
    params = _parse_params(fields[5] if len(fields) == 6 else "", where)
    try:
        return EditLogRecord(*(f.strip() for f in fields[:5]), params=params)
    except FitError as exc:
        raise LogFormatError(f"{where}: {exc}") from None


def format_log_line(r: EditLogRecord) -> str:
    params = ";".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in sorted(r.params.items()))
    return "\t".join([r.tamperer_id, r.sample_id, r.type_id, r.op_id, r.variant, params])


def write_edit_logs(path: str | Path, records: Iterable[EditLogRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(format_log_line(r) + "\n" for r in records), encoding="utf-8")


@dataclass
class EditLogs:
    by_tamperer: dict[str, list[EditLogRecord]]
    warnings: list[str]

    @property
    def records(self) -> list[EditLogRecord]:
        return [r for k in sorted(self.by_tamperer) for r in self.by_tamperer[k]]

    def counts(self) -> dict[str, dict[str, int]]:
        """Distinct samples per tamperer and type."""
        out: dict[str, dict[str, int]] = {}
        for k, recs in sorted(self.by_tamperer.items()):
            seen: dict[str, set] = defaultdict(set)
            for r in recs:
                seen[r.type_id].add(r.sample_id)
            out[k] = {t: len(s) for t, s in sorted(seen.items())}
        return out


def log_files(directory: str | Path) -> list[Path]:
    d = Path(directory)
    if d.is_file():
        return [d]
    return sorted(p for p in d.rglob("*") if p.is_file() and p.suffix in LOG_SUFFIXES)


def load_edit_logs(directory: str | Path) -> EditLogs:
    """Parse every log file under ``directory`` and group records by tamperer.

    Repeated (tamperer, sample, op_id) lines keep the first occurrence and
    add a warning.
    """
    seen: set[tuple[str, str, str]] = set()
    groups: dict[str, list[EditLogRecord]] = defaultdict(list)
    warnings: list[str] = []
    for path in log_files(directory):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip() or line.startswith("#"):
                    continue
                where = f"{path}:{lineno}"
                rec = parse_log_line(line, where)
                key = (rec.tamperer_id, rec.sample_id, rec.op_id)
                if key in seen:
                    msg = f"{where}: duplicate record {key} ignored"
                    warnings.append(msg)
                    log.warning(msg)
                    continue
                seen.add(key)
                groups[rec.tamperer_id].append(rec)
    return EditLogs(dict(groups), warnings)
