"""Tests for the command-line harness and its JSON report contract."""

import json
from importlib import resources

import jsonschema
import pytest

from dsalab.cli import main


@pytest.fixture(scope="module")
def schema():
    ref = resources.files("dsalab") / "schemas" / "report.schema.json"
    return json.loads(ref.read_text())


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def check_report(schema, out):
    doc = json.loads(out)
    jsonschema.validate(doc, schema)
    return doc


# -- rates ----------------------------------------------------------------------


def test_rates_single_k(capsys, schema):
    code, out, err = run_cli(capsys, "rates", "--k", "4", "--deterministic")
    assert code == 0
    doc = check_report(schema, out)
    by_scheme = {row["scheme"]: row["rates"] for row in doc["rows"]}
    assert by_scheme["optimal"]["communication"] == {"num": 1, "den": 1}
    assert by_scheme["optimal"]["source_key"] == {"num": 3, "den": 1}
    assert by_scheme["baseline"]["communication"] == {"num": 3, "den": 1}
    assert by_scheme["baseline"]["source_key"] == {"num": 12, "den": 1}
    assert "optimal" in err and "baseline" in err


def test_rates_range(capsys, schema):
    code, out, _ = run_cli(capsys, "rates", "--k", "3..6", "--deterministic")
    assert code == 0
    doc = check_report(schema, out)
    optimal = [r for r in doc["rows"] if r["scheme"] == "optimal"]
    baseline = [r for r in doc["rows"] if r["scheme"] == "baseline"]
    assert len(optimal) == len(baseline) == 4
    for row in optimal:
        assert row["rates"]["source_key"] == {"num": row["users"] - 1, "den": 1}


def test_rates_k2_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["rates", "--k", "2"])
    assert exc.value.code == 2
    assert "infeasible" in capsys.readouterr().err


# -- run ------------------------------------------------------------------------


def test_run_reports_transcript(capsys, schema):
    code, out, _ = run_cli(
        capsys, "run", "--k", "3", "--q", "2", "--seed", "5", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["recovery_ok"] and doc["rates_match"]
    assert len(doc["transcript"]["messages"]) == 3
    assert doc["transcript"]["seed"] == 5


def test_run_baseline(capsys, schema):
    code, out, _ = run_cli(
        capsys, "run", "--k", "4", "--scheme", "baseline", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert len(doc["transcript"]["messages"]) == 4 * 3
    assert doc["measured"]["source_symbols"] == 12


# -- audit ----------------------------------------------------------------------


def test_audit_k3_passes(capsys, schema):
    code, out, err = run_cli(
        capsys, "audit", "--k", "3", "--q", "2", "--l", "1", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["passed"]
    assert doc["outcomes"] == 32
    assert all(c["ok"] for c in doc["checks"])
    assert "checks passed" in err


def test_audit_k4_q3_with_threshold(capsys, schema):
    code, out, _ = run_cli(
        capsys, "audit", "--k", "4", "--q", "3", "--t", "1", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["outcomes"] == 3 ** 7
    assert doc["passed"]


def test_audit_baseline(capsys, schema):
    code, out, _ = run_cli(
        capsys, "audit", "--k", "3", "--scheme", "baseline", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["outcomes"] == 512
    # key-structure checks target the optimal design; recovery+security only
    assert all(
        c["quantity"].startswith(("recovery", "security")) for c in doc["checks"]
    )


def test_audit_budget_exceeded(capsys):
    code, out, err = run_cli(capsys, "audit", "--k", "6", "--q", "5", "--l", "3")
    assert code == 2
    assert out == ""
    assert "budget" in err and "--budget" in err


def test_audit_respects_budget_env(capsys, monkeypatch):
    monkeypatch.setenv("DSALAB_BUDGET", "10")
    code, _, err = run_cli(capsys, "audit", "--k", "3")
    assert code == 2
    assert "budget" in err


def test_audit_workers_flag(capsys, schema):
    code, out, _ = run_cli(
        capsys, "audit", "--k", "3", "--workers", "8", "--deterministic"
    )
    assert code == 0
    assert check_report(schema, out)["passed"]


def test_audit_bits_toggle(capsys, schema):
    code, out, _ = run_cli(
        capsys, "audit", "--k", "3", "--q", "3", "--bits", "--deterministic"
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["units"] == "bits"
    residual = [
        c for c in doc["checks"] if "residual-information" in c["quantity"]
    ]
    import math

    assert residual and all(
        abs(c["value"] - math.log2(3)) < 1e-6 for c in residual
    )


def test_audit_deterministic_bytes(capsys):
    _, first, _ = run_cli(capsys, "audit", "--k", "3", "--deterministic")
    _, second, _ = run_cli(capsys, "audit", "--k", "3", "--deterministic")
    assert first == second


def test_timestamp_present_without_deterministic(capsys, schema):
    code, out, _ = run_cli(capsys, "rates", "--k", "3")
    assert code == 0
    assert "generated_at" in json.loads(out)


def test_output_flag_writes_file(tmp_path, capsys, schema):
    path = tmp_path / "report.json"
    code, out, _ = run_cli(
        capsys, "rates", "--k", "3", "--output", str(path), "--deterministic"
    )
    assert code == 0
    assert out == ""
    check_report(schema, path.read_text())


# -- sweep ----------------------------------------------------------------------


def test_sweep_grid(capsys, schema):
    code, out, _ = run_cli(
        capsys,
        "sweep", "--k", "3..4", "--trials", "5", "--seed", "1", "--deterministic",
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["passed"]
    assert len(doc["points"]) == 4  # two user counts x two schemes


# -- demo-infeasible ---------------------------------------------------------------


def test_demo_refuses_without_force(capsys):
    code, out, err = run_cli(capsys, "demo-infeasible", "--k", "3")
    assert code == 2
    assert out == ""
    assert "infeasible" in err and "--force" in err


def test_demo_with_force(capsys, schema):
    code, out, _ = run_cli(
        capsys, "demo-infeasible", "--k", "3", "--q", "2", "--force",
        "--deterministic",
    )
    assert code == 0
    doc = check_report(schema, out)
    assert doc["passed"]
    assert len(doc["pairs"]) == 6
    for pair in doc["pairs"]:
        assert abs(pair["check"]["value"] - 1.0) <= 1e-9


def test_demo_k4_t2(capsys, schema):
    code, out, _ = run_cli(
        capsys, "demo-infeasible", "--k", "4", "--t", "2", "--force",
        "--deterministic",
    )
    assert code == 0
    doc = check_report(schema, out)
    assert all(abs(p["check"]["value"] - 1.0) <= 1e-9 for p in doc["pairs"])
