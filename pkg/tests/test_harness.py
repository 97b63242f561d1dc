"""Experiment harness: configs, determinism, reports, CLI surface."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from jetgen.errors import ConfigError, ReportSchemaError
from jetgen.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    RunReport,
    read_report,
    run_experiment,
    sample_perturbation,
    sample_rng,
    summarize,
    write_report,
)


def morse_config(**over):
    base = {
        "kind": "morse_genericity",
        "dims": {"n": 1, "m": 1, "ell": 1},
        "maps": {"F": "map (x) -> (x^3)"},
        "box": [[-3.0, 3.0]],
        "grid": 64,
        "n_samples": 25,
        "seed": 2024,
        "sigma": 1.0,
    }
    base.update(over)
    return ExperimentConfig.from_json_dict(base)


def plane_config(**over):
    base = {
        "kind": "plane_excellent",
        "dims": {"n": 2, "m": 2, "ell": 2},
        "maps": {"F": "map (x,y) -> (x^2, y^2)"},
        "box": [[-3.0, 3.0], [-3.0, 3.0]],
        "grid": 24,
        "n_samples": 3,
        "seed": 99,
    }
    base.update(over)
    return ExperimentConfig.from_json_dict(base)


# ----------------------------------------------------------------------
# perturbation sampling


def test_sample_perturbation_deterministic_stream():
    a = sample_perturbation(sample_rng(7, 3), (1, 2, 3), 1.0)
    b = sample_perturbation(sample_rng(7, 3), (1, 2, 3), 1.0)
    assert np.array_equal(a.matrix, b.matrix)
    assert a.matrix.shape == (3, 2)


def test_sample_perturbation_streams_differ():
    a = sample_perturbation(sample_rng(7, 0), (1, 2, 2), 1.0)
    b = sample_perturbation(sample_rng(7, 1), (1, 2, 2), 1.0)
    assert not np.array_equal(a.matrix, b.matrix)


def test_sample_perturbation_rejects_zero_sigma():
    with pytest.raises(ConfigError):
        sample_perturbation(sample_rng(1, 0), (1, 1, 1), 0.0)


# ----------------------------------------------------------------------
# config validation


def test_config_validates_kind_and_dims():
    with pytest.raises(ConfigError):
        morse_config(kind="bogus")
    with pytest.raises(ConfigError):
        morse_config(dims={"n": 1, "m": 1, "ell": 2})
    with pytest.raises(ConfigError):
        morse_config(maps={"F": "map (x,y) -> (x+y)"})  # wrong arity
    with pytest.raises(ConfigError):
        morse_config(n_samples=0)


def test_config_requires_f_when_dims_mismatch():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json_dict({
            "kind": "morse_genericity",
            "dims": {"n": 1, "m": 2, "ell": 1},
            "maps": {"F": "map (x,y) -> (x^2 + y^2)"},
            "box": [[-1, 1]],
            "n_samples": 1,
            "seed": 0,
        })


def test_config_hash_stable_and_sensitive():
    c1, c2 = morse_config(), morse_config()
    assert c1.hash() == c2.hash()
    assert c1.hash() != morse_config(seed=2025).hash()


# ----------------------------------------------------------------------
# morse experiments


def test_morse_cubic_all_samples_pass():
    report = run_experiment(morse_config())
    assert report.failures == 0
    assert report.aggregate["n_samples"] == 25
    # hand analysis: negative slope draws give two nondegenerate critical
    # points, positive give none
    for s in report.samples:
        c = s["alpha"][0]
        want = 2 if c < 0 else 0
        assert len(s["points"]) == want, f"alpha={c}"


def test_morse_diagnostic_zero_pi_fails():
    report = run_experiment(morse_config(n_samples=1, diagnostic_zero_pi=True))
    assert report.failures == 1
    s = report.samples[0]
    assert any(p["classification"] == "degenerate_critical" for p in s["points"])
    assert s["failure_reason"]


def test_plane_excellent_diagnostic_corank2():
    report = run_experiment(plane_config(n_samples=1, diagnostic_zero_pi=True))
    assert report.failures == 1
    pts = report.samples[0]["points"]
    corank2 = [p for p in pts if p["corank"] == 2]
    assert corank2 and np.linalg.norm(corank2[0]["location"]) < 1e-6


def test_plane_excellent_random_samples_pass():
    report = run_experiment(plane_config())
    assert report.failures == 0
    for s in report.samples:
        assert s["points"], "expected a nonempty singular set"
        for p in s["points"]:
            assert p["classification"] in ("fold", "cusp")
            assert p["transverse_margin"] > 1.0


# ----------------------------------------------------------------------
# identity_checks kind


def test_identity_checks_kind():
    cfg = ExperimentConfig.from_json_dict({
        "kind": "identity_checks",
        "dims": {"n": 1, "m": 2, "ell": 2},
        "maps": {"F": "map (x,y) -> (x^2 - y, x*y + 1)",
                 "f": "map (s) -> (s, s^3 - s)"},
        "box": [[-2.0, 2.0]],
        "n_samples": 10,
        "seed": 8,
        "points_per_sample": 50,
    })
    report = run_experiment(cfg)
    assert report.failures == 0
    for s in report.samples:
        assert s["round_trip_error"] <= 1e-9
        assert s["identity_error"] <= 1e-9


# ----------------------------------------------------------------------
# gdsm kind and CSV output


def gdsm_cfg(n_samples=2, seed=42):
    return ExperimentConfig.from_json_dict({
        "kind": "gdsm_cusp",
        "dims": {"n": 2, "m": 2, "ell": 2},
        "gdsm": {"A": [[1.0, 2.0], [3.0, 1.0]]},
        "grid": 32,
        "n_samples": n_samples,
        "seed": seed,
    })


def test_gdsm_kind_records_cusp_counts(tmp_path):
    report = run_experiment(gdsm_cfg())
    assert report.failures == 0
    for s in report.samples:
        assert s["cusp_count"] == 1
    path = tmp_path / "gdsm.csv"
    write_report(report, path, "csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# format_version=1"
    assert lines[1].startswith("# config_hash=")
    assert lines[3] == ",".join(CSV_COLUMNS)
    cusp_rows = [l for l in lines if ",cusp," in l]
    assert len(cusp_rows) == 2  # one per sample


# ----------------------------------------------------------------------
# determinism and serialization


def test_reports_byte_identical(tmp_path):
    cfg = morse_config(n_samples=6)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_report(run_experiment(cfg), p1, "json")
    write_report(run_experiment(cfg), p2, "json")
    assert p1.read_bytes() == p2.read_bytes()
    c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report(run_experiment(cfg), c1, "csv")
    write_report(run_experiment(cfg), c2, "csv")
    assert c1.read_bytes() == c2.read_bytes()


def test_parallel_run_matches_serial(tmp_path):
    cfg = morse_config(n_samples=8)
    serial = tmp_path / "serial.json"
    parallel = tmp_path / "parallel.json"
    old = os.environ.get("JETGEN_THREADS")
    try:
        os.environ["JETGEN_THREADS"] = "1"
        write_report(run_experiment(cfg), serial, "json")
        os.environ["JETGEN_THREADS"] = "2"
        write_report(run_experiment(cfg), parallel, "json")
    finally:
        if old is None:
            os.environ.pop("JETGEN_THREADS", None)
        else:
            os.environ["JETGEN_THREADS"] = old
    assert serial.read_bytes() == parallel.read_bytes()


def test_report_round_trip(tmp_path):
    report = run_experiment(morse_config(n_samples=4))
    path = tmp_path / "r.json"
    write_report(report, path, "json")
    loaded = read_report(path)
    assert loaded.to_json_dict() == report.to_json_dict()


def test_empty_report_serialization(tmp_path):
    report = RunReport(format_version="1", config={"kind": "none"},
                       config_hash="0" * 64, samples=[], aggregate={
                           "n_samples": 0, "failures": 0,
                           "min_margin": None, "wall_time_s": None},
                       warnings=[])
    jpath, cpath = tmp_path / "e.json", tmp_path / "e.csv"
    write_report(report, jpath, "json")
    write_report(report, cpath, "csv")
    assert read_report(jpath).samples == []
    lines = cpath.read_text().splitlines()
    assert lines[-1] == ",".join(CSV_COLUMNS)  # header-only CSV


def test_report_schema_version_checked(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format_version": "99", "config": {},
                                "config_hash": "", "samples": [],
                                "aggregate": {}}))
    with pytest.raises(ReportSchemaError):
        read_report(path)


def test_summarize(tmp_path):
    report = run_experiment(morse_config(n_samples=3))
    path = tmp_path / "r.json"
    write_report(report, path, "json")
    text, failures = summarize(path)
    assert "failures:    0" in text
    assert failures == 0


# ----------------------------------------------------------------------
# CLI (through a subprocess to pin exit codes)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "jetgen.cli", *args],
        capture_output=True, text=True, timeout=600,
    )


def test_cli_parse_ok_and_error():
    r = run_cli("parse", "map (x,y) -> (x, y^2)")
    assert r.returncode == 0
    assert "inputs: 2" in r.stdout
    r = run_cli("parse", "map (x,y -> (x")
    assert r.returncode == 1
    assert "error" in r.stderr


def test_cli_classify_and_tb():
    r = run_cli("classify", "map (x,y) -> (x, y^3 - x*y)", "--at", "0,0")
    assert r.returncode == 0
    assert "cusp" in r.stdout
    r = run_cli("tb", "map (x,y) -> (x, y^3 - x*y)", "--at", "0,0")
    assert r.returncode == 0
    assert "(1,1,0)" in r.stdout


def test_cli_singular():
    r = run_cli("singular", "map (x,y) -> (x, y^2)", "--box=-1:1,-1:1",
                "--grid", "16")
    assert r.returncode == 0
    assert "fold" in r.stdout


def test_cli_experiment_run_and_summarize(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "kind": "morse_genericity",
        "dims": {"n": 1, "m": 1, "ell": 1},
        "maps": {"F": "map (x) -> (x^3)"},
        "box": [[-3.0, 3.0]],
        "grid": 64,
        "n_samples": 5,
        "seed": 1,
    }))
    out = tmp_path / "report.json"
    r = run_cli("experiment", "run", str(cfg_path), "--out", str(out), "--format", "json")
    assert r.returncode == 0, r.stderr
    assert out.exists()
    r = run_cli("report", "summarize", str(out))
    assert r.returncode == 0
    assert "failures:    0" in r.stdout


def test_cli_experiment_failure_exit_code(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "kind": "morse_genericity",
        "dims": {"n": 1, "m": 1, "ell": 1},
        "maps": {"F": "map (x) -> (x^3)"},
        "box": [[-3.0, 3.0]],
        "grid": 64,
        "n_samples": 1,
        "seed": 1,
        "diagnostic_zero_pi": True,
    }))
    r = run_cli("experiment", "run", str(cfg_path))
    assert r.returncode == 2
    # the escape hatch tolerates a budgeted number of failures
    r = run_cli("experiment", "run", str(cfg_path), "--allow-failures", "1")
    assert r.returncode == 0


def test_cli_missing_file_is_usage_error():
    r = run_cli("report", "summarize", "/nonexistent/report.json")
    assert r.returncode == 1
