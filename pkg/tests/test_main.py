# tests/test_main.py
import csv
import importlib.util
import json
from pathlib import Path

import jsonschema
import pytest

from plapkit import schemas
from plapkit.config import settings
from plapkit.main import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, dispatch

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
SCHEMAS = ROOT / "schemas"


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    """Default output directory inside the test's tmp dir."""
    out = tmp_path / "out"
    monkeypatch.setattr(settings, "OUTPUT_DIR", str(out))
    return out


def _read_csv(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _validate(path: Path, schema_name: str) -> dict:
    """Load an emitted document and check it against the shipped schema."""
    document = json.loads(path.read_text())
    schema = json.loads((SCHEMAS / f"{schema_name}.schema.json").read_text())
    jsonschema.validate(instance=document, schema=schema)
    return document


def _shape(schema: dict) -> dict:
    """Property and required names of a schema and of each of its definitions."""
    parts = {"": schema, **schema.get("$defs", {})}
    return {name: (sorted(part["properties"]), sorted(part.get("required", []))) for name, part in parts.items()}


def test_ineq_command(output_dir):
    assert dispatch(["ineq", "--p", "2", "3", "--dims", "1", "3", "--samples", "4000", "--seed", "7", "--csv"]) == EXIT_OK
    summary = schemas.InequalitySummaryOut.model_validate_json((output_dir / "ineq_summary.json").read_text())
    _validate(output_dir / "ineq_summary.json", "ineq_summary")
    assert summary.passed
    assert summary.seed == 7
    assert [row.p for row in summary.rows] == [2.0, 3.0]
    assert all(row.min_mhck_rel >= -1e-10 for row in summary.rows)
    assert (output_dir / "ineq_summary.csv").exists()


def test_model_classify_command(output_dir):
    code = dispatch(["model", "classify", "--profile", "power:1", "--m", "2", "--p", "2", "--csv", "--svg"])
    assert code == EXIT_OK
    verdict = schemas.ParabolicityOut.model_validate_json((output_dir / "model_verdict.json").read_text())
    _validate(output_dir / "model_verdict.json", "model_verdict")
    assert verdict.verdict == "Parabolic"
    assert verdict.profile == "power:1"
    assert _read_csv(output_dir / "model_integrals.csv")[0] == ["R", "integral"]
    assert (output_dir / "model_integrals.svg").read_text().lstrip().startswith("<?xml")


def test_solve_command(output_dir):
    assert dispatch(["solve", "--problem", str(DATA / "path3_problem.json")]) == EXIT_OK
    report = schemas.SolveReportOut.model_validate_json((output_dir / "solve_report.json").read_text())
    _validate(output_dir / "solve_report.json", "solve_report")
    assert report.converged
    assert report.solution[1] == pytest.approx(0.5, abs=1e-10)
    rows = _read_csv(output_dir / "solution.csv")
    assert rows[0] == ["id", "value"]
    assert float(rows[2][1]) == pytest.approx(0.5, abs=1e-10)


def test_plap_command(tmp_path, output_dir):
    (tmp_path / "graph.json").write_text(
        json.dumps(
            {
                "nodes": [{"id": 0, "boundary": True}, {"id": 1}, {"id": 2, "boundary": True}],
                "edges": [{"tail": 0, "head": 1}, {"tail": 1, "head": 2}],
            }
        )
    )
    (tmp_path / "u.json").write_text(json.dumps({"values": {"0": 0.0, "1": 1.0, "2": 3.0}}))
    code = dispatch(["plap", "--graph", str(tmp_path / "graph.json"), "--field", str(tmp_path / "u.json"), "--p", "3"])
    assert code == EXIT_OK
    out = schemas.PlapOut.model_validate_json((output_dir / "plap.json").read_text())
    _validate(output_dir / "plap.json", "plap")
    assert out.values[1] == pytest.approx(3.0)
    assert out.energy == pytest.approx(3.0)


def test_knr_audit_command(output_dir):
    code = dispatch(["knr", "audit", "--family", "path", "--p", "2", "--recipe", "constant", "--N", "4", "8", "16", "--csv"])
    assert code == EXIT_OK
    report = schemas.KnrReportOut.model_validate_json((output_dir / "knr_report.json").read_text())
    _validate(output_dir / "knr_report.json", "knr_report")
    assert report.verdict == "FailsA"
    assert report.recipe == "constant"
    assert len(_read_csv(output_dir / "knr_trend.csv")) == 4


def test_compare_command(output_dir):
    code = dispatch(["compare", "scalar", "--spec", str(DATA / "scalar_path_bump.json"), "--csv", "--svg"])
    assert code == EXIT_OK
    report = schemas.ComparisonReportOut.model_validate_json((output_dir / "comparison_scalar.json").read_text())
    _validate(output_dir / "comparison_scalar.json", "comparison")
    assert report.conclusion == "oscillation-vanishing"
    assert [row.N for row in report.rows] == [4, 8, 16]
    assert (output_dir / "comparison_scalar.svg").exists()


def test_compare_overrides_spec(output_dir):
    code = dispatch(["compare", "constancy", "--spec", str(DATA / "scalar_path_bump.json"), "--N", "4", "8", "16", "32"])
    assert code == EXIT_OK
    report = schemas.ComparisonReportOut.model_validate_json((output_dir / "comparison_constancy.json").read_text())
    _validate(output_dir / "comparison_constancy.json", "comparison")
    assert report.mode == "constancy"
    assert len(report.rows) == 4


def test_compare_map_document(tmp_path, output_dir):
    spec = json.loads((DATA / "scalar_path_bump.json").read_text())
    spec["v"]["direction"] = [1.0, -2.0]
    (tmp_path / "map.json").write_text(json.dumps(spec))
    assert dispatch(["compare", "map", "--spec", str(tmp_path / "map.json")]) == EXIT_OK
    document = _validate(output_dir / "comparison_map.json", "comparison")
    assert all(row["tn_checks"] for row in document["rows"])


def test_data_files_match_input_schemas():
    problem = json.loads((DATA / "path3_problem.json").read_text())
    jsonschema.validate(instance=problem, schema=json.loads((SCHEMAS / "problem.schema.json").read_text()))
    jsonschema.validate(instance=problem["graph"], schema=json.loads((SCHEMAS / "graph.schema.json").read_text()))
    bad = {**problem, "p": 1.5}
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(instance=bad, schema=json.loads((SCHEMAS / "problem.schema.json").read_text()))


def test_capacity_command(output_dir):
    assert dispatch(["capacity", "--family", "ray", "--p", "3", "--N", "4", "8", "16"]) == EXIT_OK
    out = schemas.CapacityOut.model_validate_json((output_dir / "capacity.json").read_text())
    _validate(output_dir / "capacity.json", "capacity")
    assert out.scaled == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)
    assert out.trend == "vanishing"


@pytest.mark.parametrize("family, expected", [("ray", 0.1), ("path", 0.2)])
def test_capacity_ray_and_path(family, expected, output_dir):
    assert dispatch(["capacity", "--family", family, "--p", "2", "--N", "10"]) == EXIT_OK
    out = schemas.CapacityOut.model_validate_json((output_dir / "capacity.json").read_text())
    assert out.rows[0][1] == pytest.approx(expected, rel=1e-10)


def test_no_json_flag(output_dir):
    assert dispatch(["capacity", "--family", "ray", "--p", "2", "--N", "4", "--no-json"]) == EXIT_OK
    assert not (output_dir / "capacity.json").exists()


# ---- Exit codes ----
def test_argument_errors_exit_2():
    assert dispatch(["transmogrify"]) == EXIT_INVALID
    assert dispatch(["model", "classify", "--m", "2"]) == EXIT_INVALID


def test_invalid_input_writes_diagnostic(tmp_path, output_dir):
    problem = json.loads((DATA / "path3_problem.json").read_text())
    problem["p"] = 1.5
    (tmp_path / "bad.json").write_text(json.dumps(problem))
    assert dispatch(["solve", "--problem", str(tmp_path / "bad.json")]) == EXIT_INVALID
    diag = schemas.DiagnosticOut.model_validate_json((output_dir / "diagnostic.json").read_text())
    assert diag.exit_code == EXIT_INVALID
    _validate(output_dir / "diagnostic.json", "diagnostic")
    assert diag.command == "solve"

    assert dispatch(["knr", "audit", "--family", "torus", "--p", "2", "--N", "4", "8", "16"]) == EXIT_INVALID
    assert json.loads((output_dir / "diagnostic.json").read_text())["error_type"] == "AuditError"


def test_unconverged_solve_exits_3(tmp_path, output_dir):
    problem = {
        "graph": {
            "nodes": [{"id": i, "boundary": i in (0, 4)} for i in range(5)],
            "edges": [{"tail": i, "head": i + 1} for i in range(4)],
        },
        "p": 4,
        "source": {"0": 0.0, "1": 1.0, "2": -2.0, "3": 0.5, "4": 0.0},
        "dirichlet": {"0": 0.0, "4": 1.0},
    }
    (tmp_path / "problem.json").write_text(json.dumps(problem))
    code = dispatch(["solve", "--problem", str(tmp_path / "problem.json"), "--max-iter", "0"])
    assert code == EXIT_NUMERICAL
    diag = schemas.DiagnosticOut.model_validate_json((output_dir / "diagnostic.json").read_text())
    assert diag.error_type == "ConvergenceError"
    assert not _validate(output_dir / "solve_report.json", "solve_report")["converged"]


# ---- Reproducibility ----
def test_reruns_are_byte_identical(tmp_path):
    args = ["compare", "scalar", "--spec", str(DATA / "scalar_path_bump.json"), "--csv", "--svg"]
    assert dispatch(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert dispatch(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["comparison_scalar.csv", "comparison_scalar.json", "comparison_scalar.svg"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_export_schemas(tmp_path):
    spec = importlib.util.spec_from_file_location("export_schemas", ROOT / "scripts" / "export_schemas.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    module.main(tmp_path)
    written = sorted(p.name for p in tmp_path.glob("*.schema.json"))
    assert written == sorted(p.name for p in SCHEMAS.glob("*.schema.json"))
    for name in written:
        fresh = json.loads((tmp_path / name).read_text())
        shipped = json.loads((SCHEMAS / name).read_text())
        assert fresh["type"] == "object"
        # the shipped schemas must follow every field change in plapkit.schemas
        assert _shape(fresh) == _shape(shipped), name
