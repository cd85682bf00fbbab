import json
from pathlib import Path

import pytest

from arcapacity import io
from arcapacity.bounds import REFERENCE_FITS, TABLE1_NOISE_VARIANCES, sphere_packing_max_pop
from arcapacity.cli import main

SMALL = {"data": {"synthetic": {"classes": 8, "order": 2, "samples_per_class": 4, "vector_length": 256}}}


def _config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_writes_class_directories(tmp_path):
    assert main(["synth", "--classes", "5", "--vector-length", "64", "--out", str(tmp_path / "a")]) == 0
    root = tmp_path / "a" / "synth"
    assert sorted(p.name for p in root.iterdir() if p.is_dir()) == ["c0", "c1", "c2", "c3", "c4"]
    manifest = io.read_json(root / "manifest.json")
    assert len(manifest["classes"]) == 5
    assert main(["synth", "--classes", "5", "--vector-length", "64", "--out", str(tmp_path / "b")]) == 0
    assert _tree(root) == _tree(tmp_path / "b" / "synth")


def test_synth_rejects_invalid_spec(tmp_path, capsys):
    assert main(["synth", "--classes", "1", "--out", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err


def test_pipeline_end_to_end(tmp_path, capsys):
    cfg = _config(tmp_path, SMALL)
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    out = tmp_path / "run"
    assert len(io.read_csv(out / "distances.csv")) == 8 * 7
    for name in ["order.json", "enroll.json", "enroll.csv", "fit.json", "bounds.json",
                 "bounds_sphere_packing.csv", "bounds_daugman.csv"]:
        assert (out / name).exists()
    fits = io.read_json(out / "fit.json")
    assert set(fits) == {"rel_entropy", "loglik"}
    printed = capsys.readouterr().out
    assert "pair scores: 56" in printed and "sphere packing" in printed


def test_bounds_from_configured_fit_reproduces_reference_column(tmp_path, capsys):
    K, P = REFERENCE_FITS[("casia", "rel_entropy")]
    cfg = _config(tmp_path, {"bounds": {"fits": {"rel_entropy": {"K": K, "P": P}}}})
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    rows = io.read_csv(tmp_path / "b" / "bounds_sphere_packing.csv")
    assert [int(r["max_population"]) for r in rows] == [64009, 686, 36, 12, 5, 3, 2, 2]
    assert [int(r["max_population"]) for r in rows] == [
        sphere_packing_max_pop(K, P, v) for v in TABLE1_NOISE_VARIANCES
    ]
    assert "6.40e4" in capsys.readouterr().out


def test_missing_manifest_reports_error(tmp_path, capsys):
    cfg = _config(tmp_path, {"data": {"manifest": "nowhere.json"}})
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "manifest not found" in capsys.readouterr().err


def test_bad_config_reports_error(tmp_path, capsys):
    assert main(["pipeline", "--config", str(tmp_path / "none.json")]) == 2
    cfg = _config(tmp_path, {"bogus": 1})
    assert main(["pipeline", "--config", cfg]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_resume_from_stage(tmp_path):
    cfg = _config(tmp_path, SMALL)
    out = tmp_path / "run"
    assert main(["distances", "--config", cfg, "--out", str(out)]) == 0
    assert not (out / "fit.json").exists()
    before = (out / "distances.csv").read_bytes()
    assert main(["pipeline", "--config", cfg, "--out", str(out), "--stage", "fit"]) == 0
    assert (out / "fit.json").exists() and (out / "distances.csv").read_bytes() == before


def test_resume_without_upstream_artifacts_fails(tmp_path, capsys):
    cfg = _config(tmp_path, SMALL)
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "empty"), "--stage", "fit"]) == 2
    assert "[fit]" in capsys.readouterr().err


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("ARCAPACITY_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("ARCAPACITY_THREADS", "2")
    assert main(["fit-ar", "--config", _config(tmp_path, SMALL)]) == 0
    assert (tmp_path / "env" / "enroll.json").exists()


def test_report_command(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 1
    cfg = _config(tmp_path, SMALL)
    main(["distances", "--config", cfg, "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path / "r")]) == 0
    assert "pair scores: 56" in capsys.readouterr().out


def test_verify_writes_report(tmp_path):
    settings = {
        "verify": {"populations": 1, "trials": 100, "erlang_configs": 4, "erlang_trials": 2000,
                   "vector_length": 64, "consistency_n_avg": 200}
    }
    code = main(["verify", "--config", _config(tmp_path, settings), "--out", str(tmp_path / "v")])
    report = io.read_json(tmp_path / "v" / "verify.json")
    assert {s["name"] for s in report["suites"]} == {"union_bound", "erlang", "consistency", "identical_classes"}
    statuses = {s["name"]: s["status"] for s in report["suites"]}
    assert statuses["identical_classes"] == "expected-degenerate"
    assert code == (0 if report["passed"] else 1)
    assert report["passed"]
