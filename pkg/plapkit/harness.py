# plapkit/harness.py
"""
Comparison experiments on graph exhaustions.

Each experiment builds v from a recipe, produces u (usually by solving
Delta_p u = Delta_p v with matched far-field data), and tracks osc(u - v) over inner
balls as the truncation radius N grows. The conclusion flag is a pure function of the
oscillation sequence.
"""
import logging
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from . import knr
from .config import settings
from .dgraph import (
    WeightedGraph,
    coercivity_sums,
    edge_gradient,
    p_flux,
    p_laplacian,
    radius_from_root,
    row_norms,
    summation_by_parts_residual,
    summation_by_parts_scale,
)
from .solver import ConvergenceError, ProblemError, ProblemSpec, solve

logger = logging.getLogger(__name__)

Vector = Union[float, List[float]]


class ExperimentError(Exception):
    pass


class SpecError(ValueError):
    """An experiment description that cannot be run as given."""


# ---- Specs ----
class Recipe(BaseModel):
    kind: Literal["zero", "constant", "bump", "slope", "green", "file", "solve", "same"] = "zero"
    amplitude: float = 1.0
    radius: float = 3.0
    value: Vector = 0.0
    direction: Optional[List[float]] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "Recipe":
        if self.kind == "file" and not self.path:
            raise ValueError("file recipes need a path template, e.g. fields/v_{N}.json")
        if self.kind == "bump" and not self.radius > 0:
            raise ValueError("bump radius must be positive")
        return self


class ExperimentSpec(BaseModel):
    family: str
    p: float = Field(ge=2.0)
    mode: Literal["scalar", "map", "constancy", "counterexample"]
    Ns: List[int]
    v: Recipe = Recipe(kind="zero")
    u: Recipe = Recipe(kind="solve")
    u_shift: Optional[Vector] = None
    dim: int = 2
    boundary_mode: Literal["matched", "gauge"] = "matched"
    source_excess: float = Field(default=0.0, ge=0.0)
    constancy_data: Literal["antisymmetric", "capacitary", "constant"] = "antisymmetric"
    amplitude: float = 1.0
    tn_levels: int = Field(default=6, ge=1)
    capacity_probe: bool = False
    osc_tol: Optional[float] = None
    decay_factor: Optional[float] = None

    @field_validator("Ns")
    @classmethod
    def _levels(cls, Ns: List[int]) -> List[int]:
        if len(Ns) < 3:
            raise ValueError("need at least 3 truncation levels")
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ValueError("truncation levels must be strictly increasing")
        if Ns[0] < 2:
            raise ValueError("truncation radii must be >= 2")
        return Ns


# ---- Reports ----
class ComparisonRow(BaseModel):
    N: int
    osc: float
    A: List[float]
    energy_u: float
    energy_v: float
    residual: Optional[float] = None
    iterations: Optional[int] = None
    coercivity_pairing: float
    coercivity_lower: float
    coercivity_ok: bool
    identity_residual: float
    product_rule_residual: Optional[float] = None
    normalization: Optional[float] = None
    tn_checks: List[knr.XTCheck] = []


class ComparisonReport(BaseModel):
    mode: str
    family: str
    p: float
    rows: List[ComparisonRow]
    conclusion: Literal["oscillation-vanishing", "oscillation-persistent"]
    osc_tol: float
    decay_factor: float
    probe_radius: Optional[int] = None
    capacities: List[float] = []
    parabolic_at_scale: Optional[bool] = None


def conclude(oscillations: List[float], osc_tol: Optional[float] = None, decay_factor: Optional[float] = None) -> str:
    """Vanishing if the last three values are below osc_tol or decay geometrically faster than decay_factor."""
    osc_tol = settings.OSC_TOL if osc_tol is None else osc_tol
    decay_factor = settings.DECAY_FACTOR if decay_factor is None else decay_factor
    last = oscillations[-3:]
    if all(x <= osc_tol for x in last):
        return "oscillation-vanishing"
    if last[0] > 0 and (last[-1] / last[0]) ** 0.5 < decay_factor:
        return "oscillation-vanishing"
    return "oscillation-persistent"


# ---- Recipes ----
def _profile(recipe: Recipe, g: WeightedGraph, N: int) -> np.ndarray:
    if recipe.kind == "bump":
        rho = radius_from_root(g) / recipe.radius
        return recipe.amplitude * np.maximum(0.0, 1.0 - rho**2) ** 2
    if recipe.kind == "slope":
        if g.coords is not None:
            return recipe.amplitude * (g.coords[:, 0] - g.coords[g.root, 0]).astype(float)
        return recipe.amplitude * radius_from_root(g)
    if recipe.kind == "green":
        return recipe.amplitude * knr.green_potential(g)
    return np.zeros(g.n_nodes)


def evaluate_recipe(recipe: Recipe, g: WeightedGraph, N: int, width: Optional[int]) -> np.ndarray:
    """Node field of shape (n,) when width is None, (n, width) otherwise."""
    if recipe.kind in ("solve", "same"):
        raise SpecError(f"recipe {recipe.kind!r} has no standalone value")
    if recipe.kind == "file":
        from .storage import load_field

        out = load_field(g, recipe.path.format(N=N))
        expected = (g.n_nodes,) if width is None else (g.n_nodes, width)
        if out.shape != expected:
            raise SpecError(f"field file for N={N} has shape {out.shape}, expected {expected}")
        return out
    if recipe.kind == "constant":
        value = np.asarray(recipe.value, dtype=float)
        shape = (g.n_nodes,) if width is None else (g.n_nodes, width)
        return np.broadcast_to(value, shape).astype(float)
    base = _profile(recipe, g, N)
    if width is None:
        return base
    direction = np.ones(width) if recipe.direction is None else np.asarray(recipe.direction, dtype=float)
    if direction.shape != (width,):
        raise SpecError(f"recipe direction must have {width} entries")
    return np.outer(base, direction)


def _shift(spec: ExperimentSpec, width: Optional[int]) -> np.ndarray:
    if spec.u_shift is None:
        return np.zeros(() if width is None else (width,))
    shift = np.asarray(spec.u_shift, dtype=float)
    if width is not None:
        shift = np.broadcast_to(shift, (width,))
    elif shift.ndim != 0:
        raise SpecError("scalar experiments need a scalar u_shift")
    return shift


# ---- Statistics ----
def inner_ball(g: WeightedGraph, radius: int) -> np.ndarray:
    return radius_from_root(g) <= radius


def oscillation(w: np.ndarray, mask: np.ndarray) -> Tuple[float, List[float]]:
    """Largest componentwise max - min over the mask, and the midrange constant."""
    region = w[mask].reshape(int(mask.sum()), -1)
    hi = region.max(axis=0)
    lo = region.min(axis=0)
    return float(np.max(hi - lo)), [float(x) for x in 0.5 * (hi + lo)]


def _weighted_p_sum(g: WeightedGraph, u: np.ndarray, p: float) -> float:
    return float(np.sum(g.weights * row_norms(edge_gradient(g, u)) ** p))


def _solve_u(
    g: WeightedGraph, N: int, p: float, f: np.ndarray, dirichlet: dict, gauge=None
):
    try:
        spec = ProblemSpec(g, p, f, dirichlet, gauge)
        return solve(spec).ensure_converged()
    except (ConvergenceError, ProblemError) as e:
        raise ExperimentError(f"solve failed at N={N}: {e}") from e


def _matched_u(spec: ExperimentSpec, g: WeightedGraph, N: int, v: np.ndarray, f: np.ndarray):
    if spec.boundary_mode == "matched":
        dirichlet = {int(b): v[b] for b in np.flatnonzero(g.boundary)}
        return _solve_u(g, N, spec.p, f, dirichlet)
    return _solve_u(g, N, spec.p, f, {}, (g.root, v[g.root]))


def _source(spec: ExperimentSpec, g: WeightedGraph, N: int, v: np.ndarray, width: Optional[int]) -> np.ndarray:
    f = p_laplacian(g, v, spec.p)
    if spec.source_excess > 0:
        if spec.boundary_mode == "gauge":
            raise SpecError("source_excess needs matched boundary data")
        bump = spec.source_excess * _profile(Recipe(kind="bump"), g, N)
        f = f + (bump if width is None else bump[:, None])
    return f


def _row(
    spec: ExperimentSpec,
    g: WeightedGraph,
    N: int,
    u: np.ndarray,
    v: np.ndarray,
    mask: np.ndarray,
    report=None,
    normalization: Optional[float] = None,
    with_tn: bool = False,
) -> ComparisonRow:
    p = spec.p
    w = u - v
    osc, A = oscillation(w, mask)
    F = p_flux(edge_gradient(g, u), p) - p_flux(edge_gradient(g, v), p)
    sbp = summation_by_parts_residual(g, w, F) / max(summation_by_parts_scale(g, w, F), 1e-300)

    rule_residual = None
    if u.ndim == 1:
        level = float(w[g.root])
        lhs, rhs = knr.cutoff_coercivity(g, u, v, level, p)
        rule_residual = knr.product_rule_residual(g, u, v, level, p)
    else:
        lhs, rhs = coercivity_sums(g, u, v, p)
    ok = lhs >= rhs - settings.COERCIVITY_REL_TOL * max(1.0, abs(rhs))

    tn_checks = []
    if with_tn:
        C = w[g.root]
        tn_checks = [knr.check_X_T(g, u, v, C, 2.0**n, p, n) for n in range(1, spec.tn_levels + 1)]

    return ComparisonRow(
        N=N,
        osc=osc,
        A=A,
        energy_u=_weighted_p_sum(g, u, p),
        energy_v=_weighted_p_sum(g, v, p),
        residual=None if report is None else report.residual,
        iterations=None if report is None else report.iterations,
        coercivity_pairing=lhs,
        coercivity_lower=rhs,
        coercivity_ok=ok,
        identity_residual=sbp,
        product_rule_residual=rule_residual,
        normalization=normalization,
        tn_checks=tn_checks,
    )


def _finish(spec: ExperimentSpec, rows: List[ComparisonRow], probe_radius: Optional[int] = None) -> ComparisonReport:
    osc_tol = settings.OSC_TOL if spec.osc_tol is None else spec.osc_tol
    decay = settings.DECAY_FACTOR if spec.decay_factor is None else spec.decay_factor
    conclusion = conclude([r.osc for r in rows], osc_tol, decay)
    capacities: List[float] = []
    parabolic = None
    if spec.capacity_probe:
        fam = knr.ExhaustionFamily.parse(spec.family)
        capacities = [cap for _, cap in knr.capacity_profile(fam, spec.p, spec.Ns)]
        parabolic = conclude(capacities, 0.0, decay) == "oscillation-vanishing"
        if not parabolic:
            logger.warning("family %s does not look %s-parabolic at these scales", spec.family, spec.p)
    logger.info("%s comparison on %s p=%s: %s", spec.mode, spec.family, spec.p, conclusion)
    return ComparisonReport(
        mode=spec.mode,
        family=spec.family,
        p=spec.p,
        rows=rows,
        conclusion=conclusion,
        osc_tol=osc_tol,
        decay_factor=decay,
        probe_radius=probe_radius,
        capacities=capacities,
        parabolic_at_scale=parabolic,
    )


def _family(spec: ExperimentSpec) -> knr.ExhaustionFamily:
    try:
        return knr.ExhaustionFamily.parse(spec.family)
    except knr.AuditError as e:
        raise SpecError(str(e)) from e


def _compare(spec: ExperimentSpec, width: Optional[int]) -> ComparisonReport:
    fam = _family(spec)
    shift = _shift(spec, width)
    rows = []
    for N in spec.Ns:
        g = fam.graph(N)
        v = evaluate_recipe(spec.v, g, N, width)
        report = None
        if spec.u.kind == "solve":
            report = _matched_u(spec, g, N, v, _source(spec, g, N, v, width))
            u = report.solution
        elif spec.u.kind == "same":
            u = v.copy()
        else:
            u = evaluate_recipe(spec.u, g, N, width)
        u = u + shift
        rows.append(_row(spec, g, N, u, v, inner_ball(g, N // 2), report, with_tn=width is not None))
        logger.debug("%s N=%d osc=%.3e", spec.mode, N, rows[-1].osc)
    return _finish(spec, rows)


# ---- Experiments ----
def run_scalar_comparison(spec: ExperimentSpec) -> ComparisonReport:
    return _compare(spec, None)


def run_map_comparison(spec: ExperimentSpec) -> ComparisonReport:
    if spec.dim < 2:
        raise SpecError(f"map comparisons need target dimension >= 2, got {spec.dim}")
    return _compare(spec, spec.dim)


def _constancy_data(spec: ExperimentSpec, g: WeightedGraph, N: int):
    """Boundary data for the flattening test; returns (u, solver report or None)."""
    if spec.constancy_data == "constant":
        return np.full(g.n_nodes, spec.amplitude), None
    if spec.constancy_data == "capacitary":
        grounded = knr.grounded_at_root(g)
        dirichlet = {int(b): 0.0 for b in np.flatnonzero(grounded.boundary)}
        dirichlet[g.root] = 1.0
        report = _solve_u(grounded, N, spec.p, np.zeros(g.n_nodes), dirichlet)
        cap = _weighted_p_sum(g, report.solution, spec.p)
        return cap * report.solution, report
    boundary = np.flatnonzero(g.boundary)
    if g.coords is not None:
        signs = np.sign(g.coords[boundary, 0] - g.coords[g.root, 0]).astype(float)
    else:
        signs = np.where(np.arange(boundary.size) % 2 == 0, 1.0, -1.0)
    values = spec.amplitude * signs / N
    dirichlet = {int(b): float(x) for b, x in zip(boundary, values)}
    report = _solve_u(g, N, spec.p, np.zeros(g.n_nodes), dirichlet)
    return report.solution, report


def run_constancy(spec: ExperimentSpec) -> ComparisonReport:
    fam = _family(spec)
    rows = []
    for N in spec.Ns:
        g = fam.graph(N)
        u, report = _constancy_data(spec, g, N)
        v = np.zeros(g.n_nodes)
        rows.append(_row(spec, g, N, u, v, inner_ball(g, N // 2), report))
    return _finish(spec, rows)


def run_counterexample(spec: ExperimentSpec) -> ComparisonReport:
    """
    u = Green potential of the truncation, scaled to unit p-energy sum; v from the v recipe
    (kind 'same' gives v = u). Oscillation is measured on a fixed probe ball of radius
    half the smallest N.
    """
    fam = _family(spec)
    probe = spec.Ns[0] // 2
    rows = []
    for N in spec.Ns:
        g = fam.graph(N)
        green = knr.green_potential(g)
        scale = _weighted_p_sum(g, green, spec.p) ** (-1.0 / spec.p)
        u = scale * green
        v = u.copy() if spec.v.kind == "same" else evaluate_recipe(spec.v, g, N, None)
        rows.append(_row(spec, g, N, u, v, inner_ball(g, probe), normalization=scale))
    return _finish(spec, rows, probe_radius=probe)


def run_experiment(spec: ExperimentSpec) -> ComparisonReport:
    runners = {
        "scalar": run_scalar_comparison,
        "map": run_map_comparison,
        "constancy": run_constancy,
        "counterexample": run_counterexample,
    }
    return runners[spec.mode](spec)
