"""Write the JSON Schema of every output document into schemas/."""
import json
from pathlib import Path

from plapkit import schemas

OUTPUTS = {
    "ineq_summary": schemas.InequalitySummaryOut,
    "model_verdict": schemas.ParabolicityOut,
    "plap": schemas.PlapOut,
    "solve_report": schemas.SolveReportOut,
    "knr_report": schemas.KnrReportOut,
    "comparison": schemas.ComparisonReportOut,
    "capacity": schemas.CapacityOut,
    "diagnostic": schemas.DiagnosticOut,
    "problem": schemas.ProblemIn,
    "graph": schemas.GraphIn,
    "field": schemas.FieldIn,
}


def main(target: Path = Path(__file__).resolve().parent.parent / "schemas"):
    target.mkdir(parents=True, exist_ok=True)
    for name, model in OUTPUTS.items():
        path = target / f"{name}.schema.json"
        path.write_text(json.dumps(model.model_json_schema(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
