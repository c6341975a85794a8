"""Command-line front end.

Exit codes: 0 success, 1 validation or invariant failure, 2 usage or input
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset.annotations import AnnotationError, load_annotations
from .dataset.io import (
    DatasetManifest,
    LogFormatError,
    load_edit_logs,
    load_manifest,
    read_image,
    read_mask,
    sample_paths,
    write_edit_logs,
    write_image,
    write_manifest,
    write_sample,
)
from .model.fit import (
    INDIVIDUAL_THRESHOLD,
    POPULATION_THRESHOLD,
    FitError,
    PopulationModel,
    coefficient_distance,
    fit_population,
    load_model_file,
    write_model_file,
)
from .model.table import TYPE_IDS, TableError, default_table, load_parameter_table_file

log = logging.getLogger("fsts")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not a 64-bit unsigned integer")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text} outside (0, 1)")
    return v


def _load_table(path: str | None):
    return default_table() if path is None else load_parameter_table_file(path)


def _load_model(path: str | None, table) -> PopulationModel:
    return PopulationModel.from_table(table) if path is None else load_model_file(path)


# -- fit -------------------------------------------------------------------------


def cmd_fit(args) -> int:
    logs_dir = Path(args.logs)
    if not logs_dir.exists():
        raise UsageError(f"logs directory {logs_dir} does not exist")
    logs = load_edit_logs(logs_dir)
    if not logs.by_tamperer:
        raise UsageError("no edit logs found")
    model, individuals = fit_population(logs.records, args.individual_threshold, args.population_threshold)
    print(f"# individual_threshold={args.individual_threshold:g} population_threshold={args.population_threshold:g}")
    print(f"# individuals={model.n_individuals} samples={model.n_samples} duplicate_lines={len(logs.warnings)}")
    print("type_id\ta_k")
    for t in TYPE_IDS:
        print(f"{t}\t{model.weights[t]:.4f}")
    print()
    print("type_id\top_id\trepresentative\tshare")
    for t in TYPE_IDS:
        for op_id, v in sorted(model.representatives.get(t, {}).items()):
            print(f"{t}\t{op_id}\t{v}\t{model.retained[t][op_id][v]:.3f}")
    if args.reference:
        ref = load_model_file(args.reference)
        d = coefficient_distance(model.weights, ref.weights)
        print(f"\ncoefficient_distance\t{d:.6f}")
    if args.out:
        write_model_file(model, args.out)
        print(f"\nwrote {args.out}")
    return EXIT_OK


# -- synth -----------------------------------------------------------------------


@dataclass
class _SynthState:
    table: object
    model: PopulationModel
    sources: list  # (image_id, path, regions)
    seed: int
    out: str
    overwrite: bool


_STATE: _SynthState | None = None
_CACHE: dict = {}


def _init_worker(state: _SynthState) -> None:
    global _STATE
    _STATE = state
    _CACHE.clear()


def _image(image_id: str, path: str) -> np.ndarray:
    if image_id not in _CACHE:
        _CACHE[image_id] = read_image(path)
    return _CACHE[image_id]


def _pool():
    from .pipeline import SourceImage

    return {iid: SourceImage(iid, _image(iid, p), tuple(r)) for iid, p, r in _STATE.sources}


def sample_id_for(index: int) -> str:
    return f"s{index:06d}"


def _synth_one(index: int) -> dict:
    from .pipeline import SynthesisError, synthesize_sample

    st = _STATE
    image_id, path, regions = st.sources[index % len(st.sources)]
    sid = sample_id_for(index)
    original = _image(image_id, path)
    try:
        tampered, mask, record = synthesize_sample(original, _pool(), st.model, st.table, regions, st.seed, sid, image_id)
    except (SynthesisError, ValueError) as exc:
        return {"sample_id": sid, "ok": False, "error": str(exc)}
    write_sample(st.out, sid, tampered, mask, record, overwrite=st.overwrite)
    return {"sample_id": sid, "ok": True, "types": [i.type_id for i in record.plan.items]}


def discover_sources(sources_dir: Path, annotations_dir: Path) -> tuple[list, list[str]]:
    """Annotated source images, plus one warning per unusable source."""
    images = sorted(p for p in sources_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    usable, warnings = [], []
    for p in images:
        ann = annotations_dir / f"{p.stem}.json"
        if not ann.exists():
            warnings.append(f"{p.name}: missing annotation file {ann}; source skipped")
            continue
        img = read_image(p)
        regions = load_annotations(ann, (img.shape[1], img.shape[0]))
        if not regions:
            warnings.append(f"{p.name}: empty annotation file; source skipped")
            continue
        usable.append((p.stem, str(p), regions))
    return usable, warnings


def cmd_synth(args) -> int:
    sources_dir = Path(args.sources)
    if not sources_dir.is_dir():
        raise UsageError(f"sources directory {sources_dir} does not exist")
    ann_dir = Path(args.annotations) if args.annotations else sources_dir
    table = _load_table(args.table)
    model = _load_model(args.model, table)
    sources, warnings = discover_sources(sources_dir, ann_dir)
    for w in warnings:
        log.warning(w)
    if not sources:
        raise UsageError("no annotated source images")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.overwrite:
        clash = [sid for sid in map(sample_id_for, range(args.count)) if any(p.exists() for p in sample_paths(out, sid).values())]
        if clash:
            raise UsageError(f"sample {clash[0]} already exists in {out}; pass --overwrite")

    state = _SynthState(table, model, sources, args.seed, str(out), args.overwrite)
    indices = range(args.count)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs, initializer=_init_worker, initargs=(state,)) as ex:
            results = list(ex.map(_synth_one, indices, chunksize=max(1, args.count // (4 * args.jobs))))
    else:
        _init_worker(state)
        results = []
        for i in indices:
            results.append(_synth_one(i))
            if args.strict and not results[-1]["ok"]:
                break
            if (i + 1) % 25 == 0:
                log.info("synthesised %d/%d", i + 1, args.count)

    failed = [r for r in results if not r["ok"]]
    for r in failed:
        log.warning("%s skipped: %s", r["sample_id"], r["error"])
    manifest = DatasetManifest(
        sources=[p for _, p, _ in sources],
        annotations=[str(ann_dir / f"{iid}.json") for iid, _, _ in sources],
        master_seed=args.seed,
        table=args.table or "default",
        model=args.model or "table-weights",
        samples=sorted(r["sample_id"] for r in results if r["ok"]),
        skipped=[{"sample_id": r["sample_id"], "error": r["error"]} for r in sorted(failed, key=lambda r: r["sample_id"])],
    )
    write_manifest(out, manifest)
    types = Counter(t for r in results if r["ok"] for t in r["types"])
    print(f"samples={len(manifest.samples)} skipped={len(failed)} warnings={len(warnings)}")
    print("items per type: " + ", ".join(f"{t}={types.get(t, 0)}" for t in TYPE_IDS))
    if args.strict and failed:
        log.error("strict mode: %s", failed[0]["error"])
        return EXIT_FAIL
    return EXIT_OK


# -- validate --------------------------------------------------------------------


def validate_dataset(root: Path, replay: bool = True) -> list[dict]:
    """Containment, locality, mask-format and replay checks per sample."""
    from .pipeline import MaskContainmentError, SampleRecord, SourceImage, generate_mask, replay_sample
    from .raster.geometry import rects_mask

    manifest = load_manifest(root)
    originals: dict[str, np.ndarray] = {}
    regions: dict[str, tuple] = {}
    for src, ann in zip(manifest.sources, manifest.annotations):
        if Path(src).exists():
            img = read_image(src)
            originals[Path(src).stem] = img
            if Path(ann).exists():
                regions[Path(src).stem] = tuple(load_annotations(ann, (img.shape[1], img.shape[0])))
    pool = {k: SourceImage(k, originals[k], regions.get(k, ())) for k in originals}

    findings = []
    metas = sorted((root / "meta").glob("*.json"))
    for meta in metas:
        sid = meta.stem
        add = lambda kind, msg: findings.append({"sample_id": sid, "check": kind, "message": msg})  # noqa: E731
        try:
            record = SampleRecord.from_json(meta.read_text(encoding="utf-8"))
        except (ValueError, KeyError, TypeError) as exc:
            add("schema", f"unreadable record: {exc}")
            continue
        paths = sample_paths(root, sid)
        if not paths["image"].exists() or not paths["mask"].exists():
            add("layout", "image or mask file missing")
            continue
        tampered = read_image(paths["image"])
        raw = np.asarray(Image.open(paths["mask"]).convert("L"))
        if not np.isin(raw, (0, 255)).all():
            add("mask-format", "mask values outside {0, 255}")
        mask = raw > 127
        H, W = tampered.shape[:2]
        if mask.shape != (H, W):
            add("mask-format", f"mask {mask.shape[::-1]} does not match image {W}x{H}")
            continue
        allowed = rects_mask(record.geometries(), W, H, dilate=1)
        stray = int((mask & ~allowed).sum())
        if stray:
            add("containment", f"{stray} mask pixels outside effective geometry")
        original = originals.get(record.image_id)
        if original is None:
            continue
        if original.shape != tampered.shape:
            add("locality", "tampered image size differs from its source")
            continue
        outside = ~mask
        if (tampered[outside] != original[outside]).any():
            add("locality", "pixels outside the mask differ from the source")
        try:
            generate_mask(original, tampered, record.geometries())
        except MaskContainmentError as exc:
            add("containment", str(exc))
        if replay:
            try:
                again, again_mask = replay_sample(original, pool, record)
            except Exception as exc:  # noqa: BLE001 - any failure is a finding
                add("replay", f"replay failed: {exc}")
                continue
            if not np.array_equal(again, tampered):
                add("replay", "replayed image differs")
            if not np.array_equal(again_mask, mask):
                add("replay", "replayed mask differs")
    return findings


def cmd_validate(args) -> int:
    root = Path(args.dataset)
    if not (root / "manifest.json").exists() or not (root / "meta").is_dir():
        raise UsageError(f"{root} is not a dataset (manifest.json or meta/ missing)")
    findings = validate_dataset(root, replay=not args.no_replay)
    n = len(list((root / "meta").glob("*.json")))
    if findings:
        path = Path(args.findings) if args.findings else root / "validation-findings.json"
        path.write_text(json.dumps(findings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for f in findings:
            print(f"FAIL {f['sample_id']} {f['check']}: {f['message']}")
        print(f"{len(findings)} finding(s) over {n} samples; details in {path}")
        return EXIT_FAIL
    print(f"ok: {n} samples passed all checks")
    return EXIT_OK


# -- report ----------------------------------------------------------------------


def cmd_report(args) -> int:
    from .dataset.plotting import plot_group_fidelity, plot_top_operations
    from .dataset.report import format_text, frequency_report, mask_scores, top_operations_from_logs, top_operations_tsv
    from .pipeline import SampleRecord

    table = _load_table(args.table)
    out = Path(args.out) if args.out else None
    records = []
    if args.dataset:
        root = Path(args.dataset)
        if not (root / "meta").is_dir():
            raise UsageError(f"{root} has no meta/ directory")
        records = [SampleRecord.from_json(p.read_text(encoding="utf-8")) for p in sorted((root / "meta").glob("*.json"))]
    if not records and not args.logs:
        raise UsageError("nothing to report: give a dataset with records or --logs")
    types = [args.type] if args.only_type else None
    report = frequency_report(records, table, types)

    if args.logs:
        logs = load_edit_logs(args.logs)
        if not logs.by_tamperer:
            raise UsageError("no edit logs found")
        report.top_operations[args.type] = top_operations_from_logs(logs.by_tamperer, table, args.type)

    if args.pred_masks and records:
        pred_dir = Path(args.pred_masks)
        pairs = []
        for r in records:
            p = pred_dir / f"{r.sample_id}.png"
            if not p.exists():
                continue
            gt = read_mask(sample_paths(args.dataset, r.sample_id)["mask"])
            pred = np.asarray(Image.open(p).convert("L"), dtype=float) / 255.0
            pairs.append((r.sample_id, pred, gt))
        report.per_sample, report.aggregate = mask_scores(pairs)

    text = format_text(report)
    print(text, end="")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(text, encoding="utf-8")
        for t, rows in report.top_operations.items():
            (out / f"top_operations_{t}.tsv").write_text(top_operations_tsv(rows), encoding="utf-8")
            plot_top_operations(rows, out / f"top_operations_{t}.png", f"{t}: most used operations")
        if report.groups:
            plot_group_fidelity(report.groups, out / "fidelity.png", "configured vs observed share")
    if args.check and report.failing_groups():
        for g in report.failing_groups():
            print(f"FAIL {g.type_id} {g.op_id}: chi2={g.chi2:.2f} p={g.p_value:.3g}")
        return EXIT_FAIL
    return EXIT_OK


# -- replay ----------------------------------------------------------------------


def cmd_replay(args) -> int:
    from .pipeline import SampleRecord, SourceImage, replay_sample

    root = Path(args.dataset)
    manifest = load_manifest(root)
    meta = sample_paths(root, args.sample)["meta"]
    if not meta.exists():
        raise UsageError(f"no record for sample {args.sample}")
    record = SampleRecord.from_json(meta.read_text(encoding="utf-8"))
    pool = {}
    for src, ann in zip(manifest.sources, manifest.annotations):
        img = read_image(src)
        pool[Path(src).stem] = SourceImage(Path(src).stem, img, tuple(load_annotations(ann, (img.shape[1], img.shape[0]))))
    if record.image_id not in pool:
        raise UsageError(f"source image {record.image_id} not found")
    tampered, mask = replay_sample(pool[record.image_id].image, pool, record)
    if args.out:
        write_image(args.out, tampered)
    stored = read_image(sample_paths(root, args.sample)["image"])
    same = np.array_equal(stored, tampered)
    print(f"{args.sample}: replay {'identical' if same else 'DIFFERS'}")
    return EXIT_OK if same else EXIT_FAIL


# -- helpers for demos -----------------------------------------------------------


def cmd_demo_corpus(args) -> int:
    from .dataset.corpus import make_demo_corpus

    paths = make_demo_corpus(args.out, args.count, args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def cmd_simulate_logs(args) -> int:
    from .dataset.simulate import simulate_edit_logs

    weights = [float(x) for x in args.weights.split(",")]
    if len(weights) != len(TYPE_IDS):
        raise UsageError(f"--weights needs {len(TYPE_IDS)} values in order {','.join(TYPE_IDS)}")
    records = simulate_edit_logs(_load_table(args.table), weights, args.individuals, args.samples, args.seed)
    write_edit_logs(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsts", description="Tampering-distribution modelling and synthesis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a population model from edit logs")
    f.add_argument("logs", help="directory (or file) of edit logs")
    f.add_argument("--individual-threshold", type=_fraction, default=INDIVIDUAL_THRESHOLD)
    f.add_argument("--population-threshold", type=_fraction, default=POPULATION_THRESHOLD)
    f.add_argument("--reference", help="model file to measure coefficient distance against")
    f.add_argument("-o", "--out", help="model file to write")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("synth", help="synthesise tampered samples")
    s.add_argument("--sources", required=True, help="directory of source images")
    s.add_argument("--annotations", help="directory of {image}.json annotations (default: sources)")
    s.add_argument("--model", help="population model file (default: table weights)")
    s.add_argument("--table", help="parameter table (default: shipped table)")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--overwrite", action="store_true")
    s.add_argument("--strict", action="store_true", help="fail on the first sample error")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("validate", help="check an existing dataset")
    v.add_argument("dataset")
    v.add_argument("--findings", help="where to write findings (default: dataset/validation-findings.json)")
    v.add_argument("--no-replay", action="store_true", help="skip the replay round trip")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("report", help="operation frequencies, usage figures and mask metrics")
    r.add_argument("dataset", nargs="?")
    r.add_argument("--table")
    r.add_argument("--logs", help="edit logs for the per-tamperer usage figure")
    r.add_argument("--type", default="replacement", choices=TYPE_IDS, help="type for the usage figure")
    r.add_argument("--only-type", action="store_true", help="restrict frequency rows to --type")
    r.add_argument("--pred-masks", help="directory of predicted masks named {sample_id}.png")
    r.add_argument("--out", help="directory for report.json, report.txt, TSV and figures")
    r.add_argument("--check", action="store_true", help="exit 1 if any chi-square test has p <= 0.001")
    r.set_defaults(func=cmd_report)

    rp = sub.add_parser("replay", help="re-execute one sample from its record")
    rp.add_argument("dataset")
    rp.add_argument("sample")
    rp.add_argument("--out", help="write the replayed image here")
    rp.set_defaults(func=cmd_replay)

    d = sub.add_parser("demo-corpus", help="write a synthetic annotated document corpus")
    d.add_argument("out")
    d.add_argument("--count", type=int, default=20)
    d.add_argument("--seed", type=_seed, default=0)
    d.set_defaults(func=cmd_demo_corpus)

    sl = sub.add_parser("simulate-logs", help="write edit logs drawn from known type weights")
    sl.add_argument("out")
    sl.add_argument("--weights", default="0.2,0.2,0.2,0.2,0.2")
    sl.add_argument("--individuals", type=int, default=20)
    sl.add_argument("--samples", type=int, default=250)
    sl.add_argument("--seed", type=_seed, default=0)
    sl.add_argument("--table")
    sl.set_defaults(func=cmd_simulate_logs)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1 or getattr(args, "count", 1) < 0:
        print("error: --jobs must be >= 1 and --count >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LogFormatError, AnnotationError, TableError, FitError, FileNotFoundError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
