# plapkit/main.py
import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import harness, knr, schemas, storage
from .config import settings
from .dgraph import edge_gradient, p_energy, p_laplacian
from .harness import ExperimentError, ExperimentSpec
from .model import ModelProfile, QuadratureError, classify_model
from .solver import ConvergenceError, ProblemSpec, solve
from .vectorineq import run_inequality_suite, suite_passes

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class NumericalFailure(Exception):
    """A run that finished but whose numbers fail their acceptance check."""


@dataclass
class RunConfig:
    command: str
    out: Path
    seed: int
    emit_json: bool
    emit_csv: bool
    emit_svg: bool

    def json(self, model, name: str) -> None:
        if self.emit_json:
            storage.write_json(model, self.out / name)

    def csv(self, name: str, header, rows) -> None:
        if self.emit_csv:
            storage.write_csv(self.out / name, header, rows)


# ---- Commands ----
def cmd_ineq(args, cfg: RunConfig) -> int:
    tol = settings.INEQ_REL_TOL if args.tol is None else args.tol
    rows = run_inequality_suite(args.p, args.dims, args.samples, seed=cfg.seed)
    passed = suite_passes(rows, tol)
    summary = schemas.InequalitySummaryOut(
        seed=cfg.seed,
        dims=list(args.dims),
        tolerance=tol,
        passed=passed,
        rows=[schemas.InequalityRowOut(**row) for row in rows],
    )
    cfg.json(summary, "ineq_summary.json")
    header = ["p", "samples", "min_lindqvist_rel", "min_mhck_rel", "max_symmetrization_rel", "min_classical_gap"]
    cfg.csv("ineq_summary.csv", header, [[row[k] for k in header] for row in rows])
    if not passed:
        raise NumericalFailure("inequality suite found a violation beyond tolerance")
    return EXIT_OK


def cmd_model(args, cfg: RunConfig) -> int:
    profile = ModelProfile.parse(args.profile)
    verdict = classify_model(profile, args.m, args.p, r0=args.r0, r_max=args.r_max, delta=args.delta)
    cfg.json(schemas.ParabolicityOut(profile=args.profile, **verdict.model_dump()), "model_verdict.json")
    cfg.csv("model_integrals.csv", ["R", "integral"], verdict.integral_values)
    if cfg.emit_svg:
        from .plots import plot_partial_integrals

        plot_partial_integrals(verdict, cfg.out / "model_integrals.svg")
    return EXIT_OK


def cmd_plap(args, cfg: RunConfig) -> int:
    g = storage.load_graph(args.graph)
    u = storage.load_field(g, args.field)
    lap = p_laplacian(g, u, args.p)
    out = schemas.PlapOut(p=args.p, energy=p_energy(g, u, args.p), values=storage.field_to_values(g, lap))
    cfg.json(out, "plap.json")
    cfg.csv("plap.csv", storage.field_header(lap), storage.field_rows(g, lap))
    return EXIT_OK


def _node_array(g, values: Dict[int, object]) -> np.ndarray:
    first = np.asarray(next(iter(values.values())), dtype=float)
    out = np.zeros((g.n_nodes,) + first.shape)
    for node_id, value in values.items():
        out[g.index_of(node_id)] = value
    return out


def load_problem(path) -> Tuple[ProblemSpec, schemas.ProblemIn]:
    path = Path(path)
    payload = schemas.ProblemIn.model_validate_json(path.read_text(encoding="utf-8"))
    if isinstance(payload.graph, str):
        g = storage.load_graph(path.parent / payload.graph)
    else:
        g = storage.graph_from_payload(payload.graph)
    source = _node_array(g, payload.source) if payload.source else None
    dirichlet = {g.index_of(node_id): value for node_id, value in payload.dirichlet.items()}
    gauge = None
    if payload.gauge is not None:
        gauge = (g.index_of(payload.gauge[0]), payload.gauge[1])
    return ProblemSpec(g, payload.p, source, dirichlet, gauge), payload


def cmd_solve(args, cfg: RunConfig) -> int:
    spec, payload = load_problem(args.problem)
    tol = args.tol if args.tol is not None else payload.tol
    max_iter = args.max_iter if args.max_iter is not None else payload.max_iter
    report = solve(spec, tol=tol, max_iter=max_iter)
    g = spec.graph
    out = schemas.SolveReportOut(
        p=report.p,
        iterations=report.iterations,
        residual=report.residual,
        energy=report.energy,
        objective=report.objective,
        converged=report.converged,
        tolerance=report.tolerance,
        objective_history=report.objective_history,
        solution=storage.field_to_values(g, report.solution),
    )
    cfg.json(out, "solve_report.json")
    storage.write_csv(cfg.out / "solution.csv", storage.field_header(report.solution), storage.field_rows(g, report.solution))
    report.ensure_converged()
    return EXIT_OK


def _knr_builder(args) -> knr.FieldBuilder:
    if args.recipe == "zero":
        return knr.zero_field
    if args.recipe == "constant":
        return knr.constant_field
    if args.recipe == "green":
        return knr.green_field
    if not args.fields:
        raise ValueError("recipe 'file' needs --fields with an {N} placeholder")

    def from_file(g, N: int) -> np.ndarray:
        # potential file; the field is minus its gradient
        return -edge_gradient(g, storage.load_field(g, args.fields.format(N=N)))

    return from_file


def cmd_knr(args, cfg: RunConfig) -> int:
    fam = knr.ExhaustionFamily.parse(args.family)
    report = knr.knr_audit(fam, _knr_builder(args), args.p, args.N)
    cfg.json(schemas.KnrReportOut(recipe=args.recipe, **report.model_dump()), "knr_report.json")
    cfg.csv(
        "knr_trend.csv",
        ["N", "norm", "negative_mass", "total_divergence"],
        [[r.N, r.norm, r.negative_mass, r.total_divergence] for r in report.rows],
    )
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    data = json.loads(Path(args.spec).read_text(encoding="utf-8")) if args.spec else {}
    data["mode"] = args.mode
    for key in ("family", "p", "Ns"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    spec = ExperimentSpec.model_validate(data)
    report = harness.run_experiment(spec)
    name = f"comparison_{spec.mode}"
    cfg.json(schemas.ComparisonReportOut(**report.model_dump()), f"{name}.json")
    cfg.csv(
        f"{name}.csv",
        ["N", "osc", "energy_u", "energy_v", "residual", "identity_residual"],
        [
            [r.N, r.osc, r.energy_u, r.energy_v, "" if r.residual is None else r.residual, r.identity_residual]
            for r in report.rows
        ],
    )
    if cfg.emit_svg:
        from .plots import plot_oscillation

        plot_oscillation(report, cfg.out / f"{name}.svg")
    return EXIT_OK


def cmd_capacity(args, cfg: RunConfig) -> int:
    fam = knr.ExhaustionFamily.parse(args.family)
    Ns = knr.check_levels(args.N, minimum=1)
    rows = knr.capacity_profile(fam, args.p, Ns)
    scaled = [cap * N ** (args.p - 1.0) for N, cap in rows]
    trend = "non-vanishing"
    if len(rows) >= 3 and harness.conclude([cap for _, cap in rows], 0.0) == "oscillation-vanishing":
        trend = "vanishing"
    cfg.json(schemas.CapacityOut(family=fam.label, p=args.p, rows=rows, scaled=scaled, trend=trend), "capacity.json")
    cfg.csv("capacity.csv", ["N", "capacity", "scaled"], [[N, cap, s] for (N, cap), s in zip(rows, scaled)])
    return EXIT_OK


# ---- Parser ----
def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default: PLAPKIT_OUTPUT_DIR)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--log-level", default=None)
    common.add_argument("--no-json", action="store_true")
    common.add_argument("--csv", action="store_true")
    common.add_argument("--svg", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="plapkit", description="Discrete p-Laplacian potential theory toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ineq", parents=[common], help="sampled check of the pointwise inequalities")
    p.add_argument("--p", type=float, nargs="+", default=[2.0, 2.5, 3.0, 4.0, 6.0, 10.0])
    p.add_argument("--dims", type=int, nargs="+", default=list(range(1, 9)))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(handler=cmd_ineq)

    p = sub.add_parser("model", help="model manifolds")
    model_sub = p.add_subparsers(dest="action", required=True)
    p = model_sub.add_parser("classify", parents=[common], help="volume-growth parabolicity test")
    p.add_argument("--profile", required=True, help="power:K, exponential:A or a JSON profile file")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(handler=cmd_model)

    p = sub.add_parser("plap", parents=[common], help="evaluate Delta_p on a graph field")
    p.add_argument("--graph", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(handler=cmd_plap)

    p = sub.add_parser("solve", parents=[common], help="solve Delta_p u = f")
    p.add_argument("--problem", required=True)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("knr", help="Kelvin-Nevanlinna-Royden audits")
    knr_sub = p.add_subparsers(dest="action", required=True)
    p = knr_sub.add_parser("audit", parents=[common])
    p.add_argument("--family", required=True, help="path, ray, z2, z3, lattice:D or a directory")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--recipe", choices=["zero", "constant", "green", "file"], default="green")
    p.add_argument("--fields", default=None, help="potential file template with {N}")
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.set_defaults(handler=cmd_knr)

    p = sub.add_parser("compare", parents=[common], help="comparison experiments")
    p.add_argument("mode", choices=["scalar", "map", "constancy", "counterexample"])
    p.add_argument("--spec", default=None, help="experiment JSON")
    p.add_argument("--family", default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--N", dest="Ns", type=int, nargs="+", default=None)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser(
        "capacity",
        parents=[common],
        help="capacity along an exhaustion",
        description="Closed form checks use --family ray ([0, N], capacity N^(1-p)); "
        "--family path is the two-sided segment [-N, N] with capacity 2 N^(1-p).",
    )
    p.add_argument("--family", required=True, help="ray, path, z2, z3, lattice:D or a directory")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.set_defaults(handler=cmd_capacity)
    return parser


def _diagnostic(cfg: RunConfig, code: int, error: BaseException) -> None:
    diag = schemas.DiagnosticOut(
        command=cfg.command, exit_code=code, error_type=type(error).__name__, message=str(error)
    )
    storage.write_json(diag, cfg.out / "diagnostic.json")


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code not in (0, None) else EXIT_OK

    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    cfg = RunConfig(
        command=command,
        out=Path(args.out or settings.OUTPUT_DIR),
        seed=settings.SEED if args.seed is None else args.seed,
        emit_json=not args.no_json,
        emit_csv=args.csv,
        emit_svg=args.svg,
    )
    handler: Callable[..., int] = args.handler
    try:
        return handler(args, cfg)
    except (QuadratureError, ConvergenceError, ExperimentError, NumericalFailure) as e:
        logger.exception("%s: numerical failure", command)
        _diagnostic(cfg, EXIT_NUMERICAL, e)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        logger.error("%s: %s", command, e)
        _diagnostic(cfg, EXIT_INVALID, e)
        return EXIT_INVALID


def run() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    run()
