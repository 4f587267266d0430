"""Tests for the command line interface: exit codes, schemas, determinism."""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lepage.cli import main

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"
MINIMAL = str(PROBLEMS / "minimal_r3.json")
ARCLENGTH = str(PROBLEMS / "arclength_r2.json")


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv: str) -> tuple[int, dict]:
    code, out, _ = run_cli(capsys, *argv)
    return code, json.loads(out)


def write_problem(tmp_path, payload: dict) -> str:
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(payload))
    return str(path)


def base_problem(**overrides) -> dict:
    payload = {
        "schema": "lepage-problem/1",
        "chart": {"n": 2, "m": 1},
        "metric": {"kind": "euclidean", "dim": 3},
    }
    payload.update(overrides)
    return payload


# ---------------------------------------------------------------------------
# derive-el
# ---------------------------------------------------------------------------


def test_derive_el_reports_components(capsys):
    code, report = run_json(capsys, "derive-el", "--problem", ARCLENGTH)
    assert code == 0
    assert report["schema"] == "lepage-report/1"
    assert report["command"] == "derive-el"
    assert len(report["components"]) == 2


def test_derive_el_latex(capsys):
    code, out, _ = run_cli(capsys, "derive-el", "--problem", ARCLENGTH,
                           "--format", "latex")
    assert code == 0
    assert "\\frac" in out


# ---------------------------------------------------------------------------
# lepage and check-lepage
# ---------------------------------------------------------------------------


def test_lepage_form_json(capsys):
    code, report = run_json(capsys, "lepage", "--problem", MINIMAL,
                            "--kind", "w")
    assert code == 0
    assert report["kind"] == "fundamental-homogeneous"
    form = report["form"]
    assert form["degree"] == 2
    assert all(len(term["word"]) == 2 for term in form["terms"])


def test_lepage_kind_aliases_agree(capsys):
    _, via_alias = run_json(capsys, "lepage", "--problem", MINIMAL,
                            "--kind", "theta")
    _, via_name = run_json(capsys, "lepage", "--problem", MINIMAL,
                           "--kind", "poincare-cartan")
    assert via_alias == via_name


@pytest.mark.parametrize("kind", ["poincare-cartan", "fundamental",
                                  "caratheodory", "fundamental-homogeneous",
                                  "hilbert-caratheodory", "krupka"])
def test_check_lepage_passes_each_kind(capsys, kind):
    code, report = run_json(capsys, "check-lepage", "--problem", MINIMAL,
                            "--kind", kind)
    assert code == 0, report
    assert report["passed"] is True
    assert report["carries_lagrangian"] is True
    assert report["vertical_contractions_vanish"] is True


def test_krupka_requires_metric(capsys):
    code, _, err = run_cli(capsys, "lepage", "--problem", ARCLENGTH,
                           "--kind", "krupka")
    assert code == 2
    assert "metric" in err


# ---------------------------------------------------------------------------
# check-zermelo
# ---------------------------------------------------------------------------


def test_check_zermelo_passes_minimal(capsys):
    code, report = run_json(capsys, "check-zermelo", "--problem", MINIMAL)
    assert code == 0
    assert report["passed"] is True
    assert set(report["verdicts"]) == {"1,1", "1,2", "2,1", "2,2"}


def test_check_zermelo_fails_with_witness(capsys, tmp_path):
    path = write_problem(tmp_path, {
        "schema": "lepage-problem/1",
        "chart": {"n": 2, "m": 1},
        "lagrangian": "y1_1^2 + y1_2^2",
    })
    code, report = run_json(capsys, "check-zermelo", "--problem", path)
    assert code == 1
    assert report["passed"] is False
    assert report["witness"]["index"]
    assert report["witness"]["point"]


# ---------------------------------------------------------------------------
# noether
# ---------------------------------------------------------------------------


def test_noether_translations_invariant(capsys):
    code, report = run_json(capsys, "noether", "--problem", MINIMAL)
    assert code == 0
    assert report["passed"] is True
    assert len(report["currents"]) == 3
    for entry in report["currents"]:
        assert entry["invariant"] is True
        assert entry["closed_along_immersion"] is True
        assert entry["current"]["degree"] == 1


def test_noether_scaling_field_fails(capsys, tmp_path):
    path = write_problem(tmp_path, base_problem(
        fields=[["0", "0", "y3"]]))
    code, report = run_json(capsys, "noether", "--problem", path)
    assert code == 1
    assert report["passed"] is False
    assert report["witness"]["field"] == 0


def test_noether_requires_fields(capsys, tmp_path):
    path = write_problem(tmp_path, base_problem())
    code, _, err = run_cli(capsys, "noether", "--problem", path)
    assert code == 2
    assert "fields" in err


# ---------------------------------------------------------------------------
# minsurf
# ---------------------------------------------------------------------------


def test_minsurf_converges_and_reports(capsys):
    code, report = run_json(capsys, "minsurf", "--grid", "17",
                            "--boundary", "scherk",
                            "--domain=-1,1,-1,1")
    assert code == 0
    assert report["converged"] is True
    assert report["iterations"] <= 12
    assert report["residuals"]["equation"] < 1e-10
    gate = report["circulations"]["gate"]
    assert report["circulations"]["f"] <= gate
    assert report["residuals"]["relation"] <= gate


def test_minsurf_solver_block_defaults(capsys):
    code, report = run_json(capsys, "minsurf", "--problem", MINIMAL)
    assert code == 0
    assert report["grid"]["nx"] == 33
    assert report["grid"]["ny"] == 33


def test_minsurf_csv_roundtrip(capsys, tmp_path):
    csv = tmp_path / "surface.csv"
    code, _ = run_json(capsys, "minsurf", "--grid", "17",
                       "--boundary", "scherk", "--domain=-1,1,-1,1",
                       "--csv", str(csv))
    assert code == 0
    values = np.loadtxt(csv, delimiter=",")
    assert values.shape == (17, 17)

    code, report = run_json(capsys, "minsurf", "--boundary", str(csv),
                            "--domain=-1,1,-1,1")
    assert code == 0
    assert report["boundary"] == "file"
    assert report["iterations"] == 0


def test_minsurf_unknown_boundary(capsys):
    code, _, err = run_cli(capsys, "minsurf", "--grid", "17",
                           "--boundary", "nonsense")
    assert code == 2
    assert "scherk" in err


# ---------------------------------------------------------------------------
# problem file validation
# ---------------------------------------------------------------------------


def test_missing_problem_file(capsys):
    code, _, err = run_cli(capsys, "derive-el", "--problem", "absent.json")
    assert code == 2
    assert err


def test_problem_requires_chart(capsys, tmp_path):
    path = write_problem(tmp_path, {"schema": "lepage-problem/1",
                                    "lagrangian": "y1_1"})
    code, _, err = run_cli(capsys, "derive-el", "--problem", path)
    assert code == 2
    assert "chart" in err


def test_problem_rejects_unknown_keys(capsys, tmp_path):
    path = write_problem(tmp_path, base_problem(extra=1))
    code, _, err = run_cli(capsys, "derive-el", "--problem", path)
    assert code == 2
    assert "extra" in err


def test_problem_rejects_metric_and_lagrangian(capsys, tmp_path):
    path = write_problem(tmp_path, base_problem(lagrangian="y1_1"))
    code, _, err = run_cli(capsys, "derive-el", "--problem", path)
    assert code == 2


def test_problem_rejects_bad_fiber_index(capsys, tmp_path):
    path = write_problem(tmp_path, {
        "schema": "lepage-problem/1",
        "chart": {"n": 2, "m": 1},
        "lagrangian": "y9_1",
    })
    code, _, err = run_cli(capsys, "derive-el", "--problem", path)
    assert code == 2
    assert "fiber index" in err


# ---------------------------------------------------------------------------
# determinism and selftest
# ---------------------------------------------------------------------------


def test_reports_are_byte_identical(capsys):
    _, first, _ = run_cli(capsys, "lepage", "--problem", MINIMAL,
                          "--kind", "w")
    _, second, _ = run_cli(capsys, "lepage", "--problem", MINIMAL,
                           "--kind", "w")
    assert first == second

    _, first, _ = run_cli(capsys, "minsurf", "--grid", "17",
                          "--boundary", "scherk", "--domain=-1,1,-1,1")
    _, second, _ = run_cli(capsys, "minsurf", "--grid", "17",
                           "--boundary", "scherk", "--domain=-1,1,-1,1")
    assert first == second


def test_selftest_subprocess_exits_zero():
    proc = subprocess.run(
        [sys.executable, "-m", "lepage.cli", "selftest"],
        capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "11/11 criteria passed" in proc.stdout
