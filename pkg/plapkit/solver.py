# plapkit/solver.py
"""
Prescribed p-Laplacian problems  Delta_p u = f  on a finite weighted graph.

The solution minimizes the convex functional

    F(u) = E_p(u) + sum_a mu_a <f(a), u(a)>

over fields matching the Dirichlet data (or the gauge pin in the pure Neumann case).
Since grad E_p = -mu * Delta_p u, stationarity of F is exactly Delta_p u = f at every
free node. Minimization is a damped Newton method with Armijo backtracking, started
from the p = 2 solution.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .config import settings
from .dgraph import WeightedGraph, edge_gradient, p_energy, p_laplacian, row_norms

logger = logging.getLogger(__name__)

NodeValue = Union[float, Sequence[float]]

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 50
_ROUNDING = 64.0 * np.finfo(float).eps
_MAX_TOLERANT_STEPS = 200
_MAX_POLISH_STEPS = 20


class ProblemError(ValueError):
    pass


class ConvergenceError(Exception):
    pass


@dataclass
class ProblemSpec:
    graph: WeightedGraph
    p: float
    source: Optional[npt.ArrayLike] = None
    dirichlet: Dict[int, NodeValue] = field(default_factory=dict)
    gauge: Optional[Tuple[int, NodeValue]] = None

    def __post_init__(self):
        g = self.graph
        n = g.n_nodes
        self.p = float(self.p)
        if not np.isfinite(self.p) or self.p < 2.0:
            raise ProblemError(f"exponent p must be >= 2, got {self.p}")

        values = [np.asarray(v, dtype=float) for v in self.dirichlet.values()]
        if self.gauge is not None:
            values.append(np.asarray(self.gauge[1], dtype=float))
        src = None if self.source is None else np.asarray(self.source, dtype=float)
        shapes = {v.shape for v in values}
        if src is not None:
            if src.ndim not in (1, 2) or src.shape[0] != n:
                raise ProblemError(f"source must have shape (n,) or (n, k) with n={n}, got {src.shape}")
            shapes.add(src.shape[1:])
        if len(shapes) > 1:
            raise ProblemError(f"inconsistent field dimensions: {sorted(shapes)}")
        value_shape = shapes.pop() if shapes else ()
        if len(value_shape) > 1 or (value_shape and value_shape[0] < 1):
            raise ProblemError(f"node values must be scalars or vectors, got shape {value_shape}")
        self.scalar = value_shape == ()
        self.width = 1 if self.scalar else value_shape[0]

        self.source_matrix = np.zeros((n, self.width)) if src is None else src.reshape(n, self.width)
        if not np.all(np.isfinite(self.source_matrix)):
            raise ProblemError("source has non-finite entries")

        self.dirichlet_mask = np.zeros(n, dtype=bool)
        self.fixed_values = np.zeros((n, self.width))
        for node, value in self.dirichlet.items():
            a = self._node(node)
            if not g.boundary[a]:
                raise ProblemError(f"Dirichlet data on interior node {g.node_ids[a]}")
            self.dirichlet_mask[a] = True
            self.fixed_values[a] = np.asarray(value, dtype=float).reshape(self.width)

        if self.dirichlet_mask.any():
            if self.gauge is not None:
                raise ProblemError("a gauge pin only applies to problems without Dirichlet data")
            self.fixed_mask = self.dirichlet_mask.copy()
        else:
            total = self.source_matrix.T @ g.measure
            scale = max(1.0, float(np.sum(g.measure * row_norms(self.source_matrix))))
            if np.max(np.abs(total)) > 1e-12 * scale:
                raise ProblemError(
                    f"pure Neumann problem needs sum mu*f = 0, got {total.tolist()}"
                )
            if self.gauge is None:
                self.gauge = (g.root, 0.0 if self.scalar else [0.0] * self.width)
            a = self._node(self.gauge[0])
            self.fixed_values[a] = np.asarray(self.gauge[1], dtype=float).reshape(self.width)
            self.fixed_mask = np.zeros(n, dtype=bool)
            self.fixed_mask[a] = True
        if not np.all(np.isfinite(self.fixed_values)):
            raise ProblemError("constraint values must be finite")

    def _node(self, index: int) -> int:
        a = int(index)
        if not (0 <= a < self.graph.n_nodes):
            raise ProblemError(f"node index {index} out of range")
        return a

    @property
    def is_neumann(self) -> bool:
        return not self.dirichlet_mask.any()

    def shaped(self, u: np.ndarray) -> np.ndarray:
        return u[:, 0].copy() if self.scalar else u.copy()


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float
    energy: float
    objective: float
    converged: bool
    tolerance: float
    p: float
    objective_history: List[float] = field(default_factory=list)

    def ensure_converged(self) -> "SolveReport":
        if not self.converged:
            raise ConvergenceError(
                f"p={self.p}: no convergence after {self.iterations} iterations "
                f"(residual {self.residual:.3e}, tolerance {self.tolerance:.3e})"
            )
        return self


def residual(
    g: WeightedGraph,
    u: npt.ArrayLike,
    f: npt.ArrayLike,
    p: float,
    dirichlet_mask: Optional[np.ndarray] = None,
) -> float:
    """Max-norm of Delta_p u - f over non-Dirichlet nodes (interior nodes by default)."""
    diff = p_laplacian(g, u, p) - np.asarray(f, dtype=float)
    mask = g.interior if dirichlet_mask is None else ~np.asarray(dirichlet_mask, dtype=bool)
    if not mask.any():
        return 0.0
    return float(np.max(row_norms(diff)[mask]))


def _laplacian_matrix(g: WeightedGraph) -> sparse.csr_matrix:
    return (g.incidence.T @ sparse.diags(g.weights) @ g.incidence).tocsr()


def linear_solve(spec: ProblemSpec) -> np.ndarray:
    """Direct sparse solve of the p = 2 problem with the same data, shape (n, width)."""
    g = spec.graph
    free = np.flatnonzero(~spec.fixed_mask)
    fixed = np.flatnonzero(spec.fixed_mask)
    u = spec.fixed_values.copy()
    if free.size == 0:
        return u
    L = _laplacian_matrix(g)
    # Delta_2 u = -(1/mu) L u
    rhs = -g.measure[free, None] * spec.source_matrix[free] - L[free][:, fixed] @ u[fixed]
    try:
        lu = sparse_linalg.splu(L[free][:, free].tocsc())
    except RuntimeError as e:
        raise ProblemError(f"singular linear system: {e}") from e
    u[free] = lu.solve(np.asarray(rhs)).reshape(free.size, spec.width)
    return u


def _objective(g: WeightedGraph, u: np.ndarray, f: np.ndarray, p: float) -> float:
    return p_energy(g, u, p) + float(np.sum(g.measure[:, None] * f * u))


def _hessian(g: WeightedGraph, du: np.ndarray, p: float, eps_reg: float, Dk) -> sparse.csc_matrix:
    """Hessian of E_p: per edge w (|z|^(p-2) I + (p-2)|z|^(p-2) zhat zhat^T), plus a w-scaled regularization relative to the stiffest edge."""
    E, k = du.shape
    norms = row_norms(du)
    if p == 2.0:
        s = np.ones(E)
    else:
        s = np.where(norms > 0, np.where(norms > 0, norms, 1.0) ** (p - 2.0), 0.0)
    zhat = du / np.where(norms > 0, norms, 1.0)[:, None]
    # regularization relative to the stiffest edge
    reg = eps_reg * max(1.0, float(s.max())) if E else eps_reg
    blocks = (s + reg)[:, None, None] * np.eye(k)[None, :, :]
    blocks = blocks + ((p - 2.0) * s)[:, None, None] * zhat[:, :, None] * zhat[:, None, :]
    blocks *= g.weights[:, None, None]
    base = (np.arange(E) * k)[:, None, None]
    rows = np.broadcast_to(base + np.arange(k)[None, :, None], (E, k, k)).ravel()
    cols = np.broadcast_to(base + np.arange(k)[None, None, :], (E, k, k)).ravel()
    B = sparse.csr_matrix((blocks.ravel(), (rows, cols)), shape=(E * k, E * k))
    return (Dk.T @ B @ Dk).tocsc()


def solve(
    spec: ProblemSpec,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    initial: Optional[npt.ArrayLike] = None,
) -> SolveReport:
    tol = settings.SOLVER_TOL if tol is None else tol
    max_iter = settings.SOLVER_MAX_ITER if max_iter is None else max_iter
    eps_reg = settings.SOLVER_EPS_REG
    step_tol = settings.SOLVER_STEP_TOL

    g, p, k = spec.graph, spec.p, spec.width
    f = spec.source_matrix
    n = g.n_nodes
    if initial is None:
        u = linear_solve(spec)
    else:
        u = np.asarray(initial, dtype=float).reshape(n, k).copy()
        u[spec.fixed_mask] = spec.fixed_values[spec.fixed_mask]

    free_idx = np.flatnonzero(np.repeat(~spec.fixed_mask, k))
    Dk = sparse.kron(g.incidence, sparse.identity(k), format="csr")
    f_norm = float(np.max(row_norms(f))) if n else 0.0

    F = _objective(g, u, f, p)
    history = [F]
    iterations = 0
    tolerant_steps = 0
    polish_steps = 0
    # last iterate passing the residual test; polishing steps only run after the first one
    best = None
    while True:
        lap = p_laplacian(g, u, p)
        r = residual(g, u, f, p, spec.dirichlet_mask)
        du = edge_gradient(g, u)
        grad_max = float(np.max(row_norms(du))) if g.n_edges else 0.0
        target = tol * max(1.0, f_norm, grad_max ** (p - 1.0))
        if r <= target:
            best = (u, F, r, target, iterations)
        elif best is not None:
            break
        if free_idx.size == 0 or polish_steps >= _MAX_POLISH_STEPS:
            break
        if iterations >= max_iter:
            break

        grad = (g.measure[:, None] * (f - lap)).ravel()[free_idx]
        H = _hessian(g, du, p, eps_reg, Dk)
        direction = sparse_linalg.spsolve(H[free_idx][:, free_idx], -grad)
        if not np.all(np.isfinite(direction)):
            logger.warning("Newton system singular at iteration %d", iterations)
            break
        step = float(np.max(np.abs(direction)))
        if best is not None:
            if step <= step_tol * max(1.0, float(np.max(np.abs(u)))):
                break
            polish_steps += 1

        slope = float(grad @ direction)
        t = 1.0
        accepted = None
        for _ in range(_MAX_HALVINGS):
            candidate = u.ravel().copy()
            candidate[free_idx] += t * direction
            candidate = candidate.reshape(n, k)
            F_c = _objective(g, candidate, f, p)
            if F_c <= F + _ARMIJO_C * t * slope:
                accepted = (candidate, F_c)
                break
            t *= 0.5
        if accepted is None:
            # near the minimum F only moves at rounding level; take the full step if it stays there
            candidate = u.ravel().copy()
            candidate[free_idx] += direction
            candidate = candidate.reshape(n, k)
            F_c = _objective(g, candidate, f, p)
            if F_c <= F + _ROUNDING * max(1.0, abs(F)) and tolerant_steps < _MAX_TOLERANT_STEPS:
                accepted = (candidate, F_c)
                tolerant_steps += 1
        if accepted is None:
            logger.debug("line search stalled at iteration %d (residual %.3e)", iterations, r)
            break

        u, F = accepted
        history.append(F)
        iterations += 1
        logger.debug("iteration %d: F=%.17g residual=%.3e step=%.3e", iterations, F, r, t * step)

    converged = best is not None
    if converged:
        u, F, r, target, iterations = best
        del history[iterations + 1 :]
    else:
        logger.warning("solver stopped unconverged: p=%s residual %.3e after %d iterations", p, r, iterations)
    return SolveReport(
        solution=spec.shaped(u),
        iterations=iterations,
        residual=r,
        energy=p_energy(g, u, p),
        objective=F,
        converged=converged,
        tolerance=target,
        p=p,
        objective_history=history,
    )
