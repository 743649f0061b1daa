"""Command line: exit codes, artifacts, manifests and determinism."""
import json

import pytest
from click.testing import CliRunner

from aqlab import io
from aqlab.cli import main

CASE_C = {"schema_version": 1, "Q": 2, "n": 1, "mesh": {"angles": 128, "r_min": 1e-8},
          "trace": {"kind": "catalog", "case": "c", "c": 1.0}, "seed": 0}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


def _run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


@pytest.fixture(scope="module")
def case_c_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("runs")
    cfg = _write(tmp, CASE_C)
    first = _run(["--ci", "solve", cfg, "--out", str(tmp / "a")])
    second = _run(["--ci", "solve", cfg, "--out", str(tmp / "b")])
    return tmp, first, second


def test_solve_case_c(case_c_run):
    tmp, first, _ = case_c_run
    assert first.exit_code == 0, first.output
    freq = json.loads((tmp / "a" / "frequency.json").read_text())
    assert freq["alpha"] == pytest.approx(2 / 3, abs=2e-3)
    assert freq["alpha_spread"] < 1e-3
    tg = json.loads((tmp / "a" / "tangent.json").read_text())
    assert tg["classification"]["case"] == "c"


def test_manifest_artifacts_revalidate(case_c_run):
    tmp, _, _ = case_c_run
    man = json.loads((tmp / "a" / "manifest.json").read_text())
    io.validate_artifact(tmp / "a" / "manifest.json", "manifest")
    kinds = {a["kind"] for a in man["artifacts"]}
    assert {"config", "solve", "profile", "frequency", "tangent", "singular", "svg"} <= kinds
    for a in man["artifacts"]:
        io.validate_artifact(tmp / "a" / a["path"], a["kind"])
        assert io.sha256(tmp / "a" / a["path"]) == a["sha256"]


def test_reruns_are_byte_identical(case_c_run):
    tmp, _, second = case_c_run
    assert second.exit_code == 0
    assert (tmp / "a" / "manifest.json").read_bytes() == (tmp / "b" / "manifest.json").read_bytes()


def test_invalid_multiplicity_is_a_usage_error(tmp_path):
    cfg = _write(tmp_path, {**CASE_C, "Q": 0})
    res = _run(["solve", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 2
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["error"] == "config" and "Q" in err["message"]


def test_missing_config_is_a_usage_error(tmp_path):
    res = _run(["solve", str(tmp_path / "nope.json")])
    assert res.exit_code == 2


def test_mismatched_trace_is_a_usage_error(tmp_path):
    cfg = _write(tmp_path, {**CASE_C, "Q": 3})
    assert _run(["solve", cfg, "--out", str(tmp_path / "o")]).exit_code == 2


def test_unknown_suite():
    res = _run(["verify", "nope"])
    assert res.exit_code == 2


def test_frequency_command(tmp_path):
    cfg = _write(tmp_path, {**CASE_C, "mesh": {"angles": 64, "r_min": 1e-6}})
    res = _run(["frequency", cfg, "--out", str(tmp_path / "f")])
    assert res.exit_code == 0
    assert "alpha 0.66" in res.output


def test_catalog_command(tmp_path):
    res = _run(["catalog", "c", "--out", str(tmp_path / "cat"), "--angles", "32"])
    assert res.exit_code == 0
    info = json.loads(res.output)
    assert info["Q"] == 2 and info["frequency"] == pytest.approx(2 / 3, rel=1e-12)
    assert (tmp_path / "cat" / "sheets_block0.svg").exists()


def test_catalog_bad_parameters():
    assert _run(["catalog", "b", "--n", "2", "--n-star", "2", "--q-star", "4",
                 "--block", "1:1,0:0,1"]).exit_code == 2


def test_help_lists_commands():
    res = _run(["--help"])
    assert res.exit_code == 0 and "verify" in res.output
