from __future__ import annotations

import json
import shutil

import numpy as np
import pytest
from PIL import Image

from fsts.cli import main
from fsts.dataset.io import read_mask, sample_paths
from fsts.model import PopulationModel, load_model_file, write_model_file


@pytest.fixture(scope="module")
def dataset(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    assert main(["synth", "--sources", str(corpus_dir), "--seed", "5", "--count", "12", "--out", str(out)]) == 0
    return out


def copy_dataset(src, dst):
    shutil.copytree(src, dst)
    return dst


# -- fit -----------------------------------------------------------------------------


def test_fit_round_trip(tmp_path, capsys):
    logs = tmp_path / "logs"
    ref = tmp_path / "ref.yaml"
    write_model_file(PopulationModel.from_weights([0.3, 0.15, 0.2, 0.15, 0.2]), ref)
    assert main(["simulate-logs", str(logs / "a.tsv"), "--weights", "0.3,0.15,0.2,0.15,0.2", "--individuals", "6", "--samples", "40", "--seed", "1"]) == 0
    capsys.readouterr()
    assert main(["fit", str(logs), "--reference", str(ref), "-o", str(tmp_path / "m.yaml")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# individual_threshold=0.02 population_threshold=0.05")
    assert "coefficient_distance" in out and "type_id\ta_k" in out
    m = load_model_file(tmp_path / "m.yaml")
    assert m.n_individuals == 6 and sum(m.weights.values()) == pytest.approx(1.0)


def test_fit_threshold_flags_echoed(tmp_path, capsys):
    logs = tmp_path / "logs"
    main(["simulate-logs", str(logs / "a.tsv"), "--individuals", "2", "--samples", "10"])
    capsys.readouterr()
    assert main(["fit", str(logs), "--individual-threshold", "0.1", "--population-threshold", "0.3"]) == 0
    assert capsys.readouterr().out.startswith("# individual_threshold=0.1 population_threshold=0.3")


def test_fit_empty_directory(tmp_path, capsys):
    assert main(["fit", str(tmp_path)]) == 2
    assert "no edit logs found" in capsys.readouterr().err


def test_fit_malformed_log(tmp_path, capsys):
    (tmp_path / "bad.tsv").write_text("only\ttwo\n")
    assert main(["fit", str(tmp_path)]) == 2
    assert "bad.tsv:1" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["synth", "--sources", ".", "--count", "1", "--out", "x", "--seed", "-1"], ["fit"], ["nonsense"]])
def test_usage_errors(argv):
    assert main(argv) == 2


# -- synth ---------------------------------------------------------------------------


def test_synth_layout(dataset):
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["master_seed"] == 5 and len(manifest["samples"]) == 12
    for sid in manifest["samples"]:
        for p in sample_paths(dataset, sid).values():
            assert p.exists()


def test_synth_refuses_overwrite(dataset, corpus_dir, capsys):
    assert main(["synth", "--sources", str(corpus_dir), "--seed", "5", "--count", "2", "--out", str(dataset)]) == 2
    assert "--overwrite" in capsys.readouterr().err


def test_synth_overwrite_is_idempotent(dataset, corpus_dir, tmp_path):
    d = copy_dataset(dataset, tmp_path / "d")
    before = {p.relative_to(d): p.read_bytes() for p in d.rglob("*") if p.is_file()}
    assert main(["synth", "--sources", str(corpus_dir), "--seed", "5", "--count", "12", "--out", str(d), "--overwrite"]) == 0
    after = {p.relative_to(d): p.read_bytes() for p in d.rglob("*") if p.is_file()}
    assert before.keys() == after.keys()
    assert all(before[k] == after[k] for k in before if k.name != "manifest.json")


def test_synth_missing_annotation_warns(corpus_dir, tmp_path, capsys):
    src = tmp_path / "src"
    shutil.copytree(corpus_dir, src)
    (src / "doc_004.json").unlink()
    capsys.readouterr()
    assert main(["synth", "--sources", str(src), "--seed", "1", "--count", "3", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "samples=3 skipped=0 warnings=1" in out


# -- validate ------------------------------------------------------------------------


def test_validate_fresh_dataset(dataset, capsys):
    assert main(["validate", str(dataset)]) == 0
    assert "ok: 12 samples" in capsys.readouterr().out


def test_validate_detects_stray_mask_pixel(dataset, tmp_path):
    d = copy_dataset(dataset, tmp_path / "d")
    p = sample_paths(d, "s000003")["mask"]
    m = np.asarray(Image.open(p)).copy()
    m[0, 0] = 255
    Image.fromarray(m).save(p)
    assert main(["validate", str(d), "--no-replay"]) == 1
    findings = json.loads((d / "validation-findings.json").read_text())
    assert any(f["sample_id"] == "s000003" and f["check"] == "containment" for f in findings)


def test_validate_detects_truncated_meta(dataset, tmp_path):
    d = copy_dataset(dataset, tmp_path / "d")
    p = sample_paths(d, "s000007")["meta"]
    p.write_text(p.read_text()[:40])
    assert main(["validate", str(d), "--findings", str(tmp_path / "f.json")]) == 1
    findings = json.loads((tmp_path / "f.json").read_text())
    assert findings == [{"check": "schema", "message": findings[0]["message"], "sample_id": "s000007"}]


def test_validate_detects_edited_pixels(dataset, tmp_path):
    d = copy_dataset(dataset, tmp_path / "d")
    p = sample_paths(d, "s000001")["image"]
    img = np.asarray(Image.open(p)).copy()
    img[-1, -1] ^= 0xFF
    Image.fromarray(img).save(p)
    assert main(["validate", str(d)]) == 1
    checks = {f["check"] for f in json.loads((d / "validation-findings.json").read_text())}
    assert "locality" in checks


def test_validate_missing_layout(tmp_path):
    assert main(["validate", str(tmp_path)]) == 2


# -- report / replay -----------------------------------------------------------------------


def test_report_outputs(dataset, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["report", str(dataset), "--out", str(out), "--check"]) == 0
    for name in ("report.json", "report.txt", "fidelity.png"):
        assert (out / name).exists()
    text = capsys.readouterr().out
    assert "records: 12" in text


def test_report_top8_replacement(dataset, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", str(dataset), "--type", "replacement", "--only-type", "--out", str(out)]) == 0
    rows = (out / "top_operations_replacement.tsv").read_text().splitlines()
    assert rows[0] == "type_id\top_id\tvariant\tlabel\tshare" and len(rows) == 9
    assert (out / "top_operations_replacement.png").stat().st_size > 0


def test_report_perfect_predictions(dataset, tmp_path):
    pred = tmp_path / "pred"
    pred.mkdir()
    for p in (dataset / "masks").glob("*.png"):
        shutil.copy(p, pred / p.name)
    out = tmp_path / "rep"
    assert main(["report", str(dataset), "--pred-masks", str(pred), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["aggregate"]["f1"] == 1.0
    assert len(rep["per_sample"]) == 12


def test_report_needs_input(tmp_path):
    assert main(["report"]) == 2


def test_replay(dataset, tmp_path, capsys):
    assert main(["replay", str(dataset), "s000002", "--out", str(tmp_path / "r.png")]) == 0
    assert "replay identical" in capsys.readouterr().out
    assert np.array_equal(np.asarray(Image.open(tmp_path / "r.png")), np.asarray(Image.open(sample_paths(dataset, "s000002")["image"])))
    assert main(["replay", str(dataset), "nope"]) == 2


def test_demo_corpus(tmp_path, capsys):
    assert main(["demo-corpus", str(tmp_path / "c"), "--count", "2", "--seed", "3"]) == 0
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == ["doc_000.json", "doc_000.png", "doc_001.json", "doc_001.png"]
