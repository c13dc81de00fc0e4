# plapkit/knr.py
"""
Kelvin-Nevanlinna-Royden audits on graph exhaustions, discrete capacities, and the
cutoff constructions used by the comparison arguments.

A graph family is non-p-parabolic when some edge field X has (a) finite
L^(p/(p-1)) norm, (b) integrable negative divergence and (c) total divergence bounded
away from zero. On finite truncations these become trends across N; knr_audit reports
them with explicit thresholds.
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from .config import settings
from .dgraph import (
    GraphError,
    WeightedGraph,
    coercivity_sums,
    divergence,
    edge_gradient,
    lattice_ball_graph,
    lq_norm,
    p_energy,
    p_flux,
    pairing,
    path_graph,
    ray_graph,
    row_norms,
)
from .solver import ProblemSpec, linear_solve, solve

logger = logging.getLogger(__name__)

FieldBuilder = Callable[[WeightedGraph, int], np.ndarray]


class AuditError(ValueError):
    pass


# ---- Cutoff alpha ----
@dataclass(frozen=True)
class CutoffAlpha:
    """0 below A-1, 1 above A+1, linear with slope 1/2 in between."""

    A: float


def alpha_eval(a: CutoffAlpha, t):
    out = np.clip((np.asarray(t, dtype=float) - a.A + 1.0) / 2.0, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def alpha_slope(a: CutoffAlpha, t1, t2):
    """Divided difference of alpha; the right derivative where t1 == t2."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    same = t1 == t2
    gap = np.where(same, 1.0, t2 - t1)
    divided = (np.asarray(alpha_eval(a, t2)) - np.asarray(alpha_eval(a, t1))) / gap
    right = np.where((t1 >= a.A - 1.0) & (t1 < a.A + 1.0), 0.5, 0.0)
    out = np.clip(np.where(same, right, divided), 0.0, 0.5)
    return float(out) if out.ndim == 0 else out


# ---- Convex function h_T ----
@dataclass(frozen=True)
class HTFunction:
    """h_T(x) = r^2/2 for r < T and T r - T^2/2 beyond, r = |x - C|."""

    T: float
    C: Tuple[float, ...]

    def __post_init__(self):
        if not (self.T > 0) or not np.isfinite(self.T):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        object.__setattr__(self, "C", tuple(float(c) for c in np.atleast_1d(self.C)))


def _offset(h: HTFunction, x) -> np.ndarray:
    xa = np.asarray(x, dtype=float)
    if xa.shape[-1:] != (len(h.C),):
        raise ValueError(f"point dimension {xa.shape[-1:]} does not match C of length {len(h.C)}")
    return xa - np.asarray(h.C)


def ht_eval(h: HTFunction, x):
    r = np.linalg.norm(_offset(h, x), axis=-1)
    out = np.where(r < h.T, 0.5 * r**2, h.T * r - 0.5 * h.T**2)
    return float(out) if out.ndim == 0 else out


def ht_grad(h: HTFunction, x) -> np.ndarray:
    z = _offset(h, x)
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    return z * np.minimum(1.0, h.T / np.where(r > 0, r, 1.0))


# ---- Fields ----
def _flux_difference(g: WeightedGraph, u: np.ndarray, v: np.ndarray, p: float) -> np.ndarray:
    return p_flux(edge_gradient(g, u), p) - p_flux(edge_gradient(g, v), p)


def _edge_average(g: WeightedGraph, values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[g.tails] + values[g.heads])


def _as_map(g: WeightedGraph, u: npt.ArrayLike) -> np.ndarray:
    ua = np.asarray(u, dtype=float)
    return ua.reshape(g.n_nodes, 1) if ua.ndim == 1 else ua


def build_X(g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, A: float, p: float) -> np.ndarray:
    """X(e) = mean of alpha(u - v) over the endpoints of e, times the flux difference on e."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    alpha = alpha_eval(CutoffAlpha(A), u - v)
    return _edge_average(g, np.asarray(alpha)) * _flux_difference(g, u, v, p)


def cutoff_slopes(g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, A: float) -> np.ndarray:
    w = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    return np.asarray(alpha_slope(CutoffAlpha(A), w[g.tails], w[g.heads]))


def build_X_T(
    g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, C, T: float, p: float
) -> np.ndarray:
    """Scalar edge field <mean of grad h_T(u - v) over the endpoints, flux difference>."""
    u = _as_map(g, u)
    v = _as_map(g, v)
    psi = ht_grad(HTFunction(T, tuple(np.atleast_1d(C))), u - v)
    return pairing(_edge_average(g, psi), _flux_difference(g, u, v, p))


def negative_part_mass(g: WeightedGraph, X: npt.ArrayLike, interior_only: bool = False) -> float:
    div = divergence(g, X)
    mask = g.interior if interior_only else np.ones(g.n_nodes, dtype=bool)
    return float(np.sum((g.measure * np.maximum(-div, 0.0))[mask]))


def interior_divergence(g: WeightedGraph, X: npt.ArrayLike) -> float:
    """Total divergence over interior nodes; boundary flux excluded."""
    return float(np.sum((g.measure * divergence(g, X))[g.interior]))


def product_rule_residual(g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, A: float, p: float) -> float:
    """
    Max gap between div X and alpha div F + (1/mu) sum_{e at a} (w/2) alpha'_e <F_e, d(u-v)_e>,
    with F the flux difference and alpha' the divided-difference slopes.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    F = _flux_difference(g, u, v, p)
    alpha = np.asarray(alpha_eval(CutoffAlpha(A), u - v))
    dw = edge_gradient(g, u - v)
    edge_term = 0.5 * g.weights * cutoff_slopes(g, u, v, A) * F * dw
    correction = np.bincount(g.tails, edge_term, g.n_nodes) + np.bincount(g.heads, edge_term, g.n_nodes)
    predicted = alpha * divergence(g, F) + correction / g.measure
    return float(np.max(np.abs(divergence(g, build_X(g, u, v, A, p)) - predicted)))


def cutoff_pairing_identity(
    g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, A: float, p: float
) -> Tuple[float, float]:
    """
    sum_a mu alpha (Delta_p u - Delta_p v) + sum_e w alpha'_e <F_e, d(u-v)_e>, which vanishes
    on any finite graph, returned with the magnitude of its terms.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    F = _flux_difference(g, u, v, p)
    alpha = np.asarray(alpha_eval(CutoffAlpha(A), u - v))
    node_terms = g.measure * alpha * divergence(g, F)
    edge_terms = g.weights * cutoff_slopes(g, u, v, A) * F * edge_gradient(g, u - v)
    total = float(np.sum(node_terms) + np.sum(edge_terms))
    return abs(total), float(np.sum(np.abs(node_terms)) + np.sum(np.abs(edge_terms)))


def cutoff_coercivity(
    g: WeightedGraph, u: npt.ArrayLike, v: npt.ArrayLike, A: float, p: float
) -> Tuple[float, float]:
    """Edgewise monotonicity weighted by the cutoff slopes; first value >= second."""
    return coercivity_sums(g, u, v, p, edge_factor=cutoff_slopes(g, u, v, A))


# ---- Tail and inner sums ----
def _distances(g: WeightedGraph, u: np.ndarray, v: np.ndarray, C) -> np.ndarray:
    return row_norms(u - v - np.atleast_1d(np.asarray(C, dtype=float)))


def tail_edges(g: WeightedGraph, u, v, C, T: float) -> np.ndarray:
    r = _distances(g, _as_map(g, u), _as_map(g, v), C)
    return np.maximum(r[g.tails], r[g.heads]) >= T


def tail_energy(g: WeightedGraph, u, v, C, T: float, p: float) -> float:
    """sum over edges with an endpoint at |u - v - C| >= T of w (|du|^p + |dv|^p)."""
    u = _as_map(g, u)
    v = _as_map(g, v)
    mask = tail_edges(g, u, v, C, T)
    du = row_norms(edge_gradient(g, u))
    dv = row_norms(edge_gradient(g, v))
    return float(np.sum((g.weights * (du**p + dv**p))[mask]))


def inner_coercivity(g: WeightedGraph, u, v, C, T: float, p: float) -> Tuple[float, float]:
    """Monotonicity pairing and its MHCK lower bound over edges with both endpoints below T."""
    u = _as_map(g, u)
    v = _as_map(g, v)
    inner = ~tail_edges(g, u, v, C, T)
    return coercivity_sums(g, u, v, p, edge_factor=inner.astype(float))


def boundary_flux_term(g: WeightedGraph, u, v, C, T: float, p: float) -> float:
    """sum over boundary nodes of mu <grad h_T(u - v), div F>."""
    u = _as_map(g, u)
    v = _as_map(g, v)
    psi = ht_grad(HTFunction(T, tuple(np.atleast_1d(C))), u - v)
    div = divergence(g, _flux_difference(g, u, v, p))
    return float(np.sum((g.measure * pairing(psi, div))[g.boundary]))


class XTCheck(BaseModel):
    T: float
    norm_q_power: float
    norm_bound: float
    negative_mass: float
    negative_bound: float
    tail_energy: float
    tail_below_one_over_n: bool
    inner_pairing: float
    inner_coercivity: float
    coercivity_bound: float
    residual_slack: float
    norm_ok: bool
    negative_ok: bool
    coercivity_ok: bool


def check_X_T(
    g: WeightedGraph, u, v, C, T: float, p: float, n: int, rel_tol: Optional[float] = None
) -> XTCheck:
    """
    The estimates of the map comparison argument at one level T_n:
      * sum w |X_T|^q <= T^q 2^(1/(p-1)) (||du||_p^p + ||dv||_p^p), q = p/(p-1)
      * interior negative divergence mass <= 2 (||du||_p^p + ||dv||_p^p)
      * mhck_constant(p) sum_inner w |d(u-v)|^p <= 2 E_tail(T) + |boundary flux term|
    Interior residuals of Delta_p u = Delta_p v enter as `residual_slack`.
    """
    rel_tol = settings.COERCIVITY_REL_TOL if rel_tol is None else rel_tol
    u = _as_map(g, u)
    v = _as_map(g, v)
    q = p / (p - 1.0)
    X = build_X_T(g, u, v, C, T, p)
    energy_sum = p * (p_energy(g, u, p) + p_energy(g, v, p))
    norm_q_power = lq_norm(g, X, q) ** q
    norm_bound = T**q * 2.0 ** (1.0 / (p - 1.0)) * energy_sum

    psi = ht_grad(HTFunction(T, tuple(np.atleast_1d(C))), u - v)
    div_F = divergence(g, _flux_difference(g, u, v, p))
    slack = float(np.sum((g.measure * row_norms(psi) * row_norms(div_F))[g.interior]))
    negative = negative_part_mass(g, X, interior_only=True)
    tail = tail_energy(g, u, v, C, T, p)
    pairing_sum, lower = inner_coercivity(g, u, v, C, T, p)
    coercivity_bound = 2.0 * tail + abs(boundary_flux_term(g, u, v, C, T, p)) + slack

    def within(lhs: float, rhs: float) -> bool:
        return lhs <= rhs + rel_tol * max(1.0, abs(rhs))

    return XTCheck(
        T=T,
        norm_q_power=norm_q_power,
        norm_bound=norm_bound,
        negative_mass=negative,
        negative_bound=2.0 * energy_sum,
        tail_energy=tail,
        tail_below_one_over_n=tail < 1.0 / max(n, 1),
        inner_pairing=pairing_sum,
        inner_coercivity=lower,
        coercivity_bound=coercivity_bound,
        residual_slack=slack,
        norm_ok=within(norm_q_power, norm_bound),
        negative_ok=within(negative, min(2.0 * tail, 2.0 * energy_sum) + slack),
        coercivity_ok=within(lower, pairing_sum) and within(pairing_sum, coercivity_bound),
    )


# ---- Exhaustion families ----
@dataclass(frozen=True)
class ExhaustionFamily:
    """
    Truncations indexed by radius N:
      path     Z segments [-N, N], boundary {-N, N}
      ray      N segments [0, N], boundary {N}
      lattice  Z^dim Euclidean balls of radius N
      custom   graph files truncation_<N>.json in `directory`
    """

    kind: Literal["path", "ray", "lattice", "custom"]
    dim: int = 1
    directory: Optional[Path] = None

    def __post_init__(self):
        if self.kind not in ("path", "ray", "lattice", "custom"):
            raise AuditError(f"unknown family kind {self.kind!r}")
        if self.kind == "lattice" and self.dim < 1:
            raise AuditError("lattice families need dim >= 1")
        if self.kind == "custom" and self.directory is None:
            raise AuditError("custom families need a directory")

    @classmethod
    def parse(cls, text: str) -> "ExhaustionFamily":
        """'path', 'ray', 'z2', 'z3', 'lattice:4' or a directory of truncation files."""
        match = re.fullmatch(r"(?:z|lattice:)(\d+)", text.lower())
        if match:
            return cls(kind="lattice", dim=int(match.group(1)))
        if text in ("path", "ray"):
            return cls(kind=text)
        if Path(text).is_dir():
            return cls(kind="custom", directory=Path(text))
        raise AuditError(f"unknown family {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "lattice":
            return f"z{self.dim}"
        if self.kind == "custom":
            return str(self.directory)
        return self.kind

    def levels(self) -> List[int]:
        """Radii available on disk (custom families only)."""
        if self.kind != "custom":
            return []
        found = (re.fullmatch(r"truncation_(\d+)\.json", p.name) for p in Path(self.directory).iterdir())
        return sorted(int(m.group(1)) for m in found if m)

    def graph(self, N: int) -> WeightedGraph:
        if self.kind == "path":
            return path_graph(N)
        if self.kind == "ray":
            return ray_graph(N)
        if self.kind == "lattice":
            return lattice_ball_graph(self.dim, N)
        from .storage import load_graph

        path = Path(self.directory) / f"truncation_{N}.json"
        if not path.exists():
            raise AuditError(f"missing truncation file {path}")
        return load_graph(path)


def check_levels(Ns: Sequence[int], minimum: int = 3) -> List[int]:
    Ns = [int(N) for N in Ns]
    if len(Ns) < minimum:
        raise AuditError(f"need at least {minimum} truncation levels, got {len(Ns)}")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise AuditError(f"truncation levels must be strictly increasing, got {Ns}")
    return Ns


# ---- Potentials ----
def grounded_at_root(g: WeightedGraph) -> WeightedGraph:
    """Same graph with the root added to the boundary, for center-to-sphere potentials."""
    boundary = g.boundary.copy()
    boundary[g.root] = True
    return WeightedGraph(
        tails=g.tails.copy(),
        heads=g.heads.copy(),
        weights=g.weights.copy(),
        measure=g.measure.copy(),
        boundary=boundary,
        node_ids=g.node_ids,
        coords=None if g.coords is None else g.coords.copy(),
        root=g.root,
    )


def green_potential(g: WeightedGraph, root: Optional[int] = None) -> np.ndarray:
    """G with L G = e_root (L the weighted graph Laplacian) and G = 0 on the boundary."""
    root = g.root if root is None else root
    if not g.boundary.any():
        raise GraphError("green potential needs boundary nodes")
    if g.boundary[root]:
        raise GraphError("green potential pole must be an interior node")
    source = np.zeros(g.n_nodes)
    source[root] = -1.0 / g.measure[root]
    spec = ProblemSpec(g, 2.0, source, {int(b): 0.0 for b in np.flatnonzero(g.boundary)})
    return linear_solve(spec)[:, 0]


def green_field(g: WeightedGraph, N: int = 0) -> np.ndarray:
    """-dG: its divergence is +1/mu at the pole and vanishes at other interior nodes."""
    return -edge_gradient(g, green_potential(g))


def zero_field(g: WeightedGraph, N: int = 0) -> np.ndarray:
    return np.zeros(g.n_edges)


def constant_field(g: WeightedGraph, N: int = 0) -> np.ndarray:
    return np.ones(g.n_edges)


def capacity(fam: ExhaustionFamily, p: float, N: int) -> float:
    """p E_p of the potential equal to 1 at the root and 0 on the radius-N boundary."""
    if N < 2:
        raise AuditError(f"capacity needs N >= 2, got {N}")
    g = grounded_at_root(fam.graph(N))
    dirichlet = {int(b): 0.0 for b in np.flatnonzero(g.boundary)}
    dirichlet[g.root] = 1.0
    report = solve(ProblemSpec(g, p, None, dirichlet)).ensure_converged()
    cap = p * report.energy
    logger.debug("capacity %s p=%s N=%d: %.17g", fam.label, p, N, cap)
    return cap


def capacity_profile(fam: ExhaustionFamily, p: float, Ns: Sequence[int]) -> List[Tuple[int, float]]:
    return [(int(N), capacity(fam, p, N)) for N in Ns]


# ---- Audit ----
class KnrRow(BaseModel):
    N: int
    norm: float
    negative_mass: float
    total_divergence: float


class KnrReport(BaseModel):
    family: str
    p: float
    q: float
    rows: List[KnrRow]
    verdict: Literal["WitnessNonParabolic", "FailsA", "FailsB", "FailsC", "Undetermined"]
    growth_tol: float
    div_floor: float


def _grows(values: List[float], tol: float, floor: float) -> bool:
    return values[-1] > (1.0 + tol) * values[-3] + floor


def knr_audit(
    fam: ExhaustionFamily,
    field_builder: FieldBuilder,
    p: float,
    Ns: Sequence[int],
    growth_tol: Optional[float] = None,
    div_floor: Optional[float] = None,
) -> KnrReport:
    """
    Verdict order: FailsA (norm grows over the last three levels), FailsB (negative mass
    grows), FailsC (interior total divergence below the floor at some level), otherwise
    WitnessNonParabolic. Non-finite statistics give Undetermined.
    """
    Ns = check_levels(Ns)
    growth_tol = settings.KNR_GROWTH_TOL if growth_tol is None else growth_tol
    div_floor = settings.KNR_DIV_FLOOR if div_floor is None else div_floor
    if p < 2:
        raise AuditError(f"exponent p must be >= 2, got {p}")
    q = p / (p - 1.0)

    rows = []
    for N in Ns:
        g = fam.graph(N)
        X = np.asarray(field_builder(g, N), dtype=float)
        row = KnrRow(
            N=N,
            norm=lq_norm(g, X, q),
            negative_mass=negative_part_mass(g, X, interior_only=True),
            total_divergence=interior_divergence(g, X),
        )
        logger.debug("knr %s N=%d: %s", fam.label, N, row)
        rows.append(row)

    norms = [r.norm for r in rows]
    masses = [r.negative_mass for r in rows]
    totals = [r.total_divergence for r in rows]
    if not np.all(np.isfinite(norms + masses + totals)):
        verdict = "Undetermined"
    elif _grows(norms, growth_tol, div_floor):
        verdict = "FailsA"
    elif _grows(masses, growth_tol, div_floor):
        verdict = "FailsB"
    elif min(totals) < div_floor:
        verdict = "FailsC"
    else:
        verdict = "WitnessNonParabolic"
    logger.info("knr audit %s p=%s: %s", fam.label, p, verdict)
    return KnrReport(
        family=fam.label,
        p=p,
        q=q,
        rows=rows,
        verdict=verdict,
        growth_tol=growth_tol,
        div_floor=div_floor,
    )
