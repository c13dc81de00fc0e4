# plapkit/dgraph.py
"""
Calculus on finite weighted graphs.

Conventions
-----------
* Node fields are arrays of shape (n,) (scalar) or (n, k) (R^k-valued maps).
* Edge fields are arrays of shape (E,) or (E, k), indexed by the oriented edges
  e = (tail, head) of the graph; reversing an edge negates its value.
* edge_gradient:  du(e) = u(head) - u(tail)
* divergence:     div X(a) = (1/mu_a) (sum_{tail(e)=a} w_e X(e) - sum_{head(e)=a} w_e X(e))
  so that  sum_a mu_a <phi(a), div X(a)> = - sum_e w_e <dphi(e), X(e)>.
* p_laplacian:    Delta_p u = div(|du|^(p-2) du), |.| the per-edge Euclidean norm.
* p_energy:       E_p(u) = (1/p) sum_e w_e |du(e)|^p, whose gradient is -mu * Delta_p u.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.sparse import csgraph

from .vectorineq import duality_map, mhck_constant

logger = logging.getLogger(__name__)

NodeField = npt.NDArray[np.float64]
EdgeField = npt.NDArray[np.float64]


class GraphError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    tails: np.ndarray
    heads: np.ndarray
    weights: np.ndarray
    measure: np.ndarray
    boundary: np.ndarray
    node_ids: Tuple[int, ...] = ()
    coords: Optional[np.ndarray] = None
    root: int = 0

    def __post_init__(self):
        tails = np.asarray(self.tails, dtype=np.int64)
        heads = np.asarray(self.heads, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=float)
        measure = np.asarray(self.measure, dtype=float)
        boundary = np.asarray(self.boundary, dtype=bool)
        n = measure.shape[0]
        if n < 1:
            raise GraphError("graph needs at least one node")
        if not (tails.shape == heads.shape == weights.shape) or tails.ndim != 1:
            raise GraphError("tails, heads and weights must be 1-D arrays of equal length")
        if boundary.shape != (n,):
            raise GraphError("boundary flags must cover every node")
        if tails.size and (tails.min() < 0 or heads.min() < 0 or max(tails.max(), heads.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(tails == heads):
            raise GraphError("self-loops are not allowed")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise GraphError("edge weights must be positive and finite")
        if np.any(measure <= 0) or not np.all(np.isfinite(measure)):
            raise GraphError("node measures must be positive and finite")
        pairs = np.sort(np.stack([tails, heads], axis=1), axis=1)
        if np.unique(pairs, axis=0).shape[0] != pairs.shape[0]:
            raise GraphError("each adjacency must appear as exactly one oriented edge")
        node_ids = tuple(int(i) for i in self.node_ids) if len(self.node_ids) else tuple(range(n))
        if len(node_ids) != n or len(set(node_ids)) != n:
            raise GraphError("node ids must be unique and cover every node")
        coords = None
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=np.int64)
            if coords.ndim != 2 or coords.shape[0] != n:
                raise GraphError("coords must have one row per node")
            coords = _readonly(coords)
        if not (0 <= self.root < n):
            raise GraphError("root index out of range")

        object.__setattr__(self, "tails", _readonly(tails))
        object.__setattr__(self, "heads", _readonly(heads))
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "measure", _readonly(measure))
        object.__setattr__(self, "boundary", _readonly(boundary))
        object.__setattr__(self, "node_ids", node_ids)
        object.__setattr__(self, "coords", coords)

        if n > 1:
            n_components, _ = csgraph.connected_components(self.adjacency, directed=False)
            if n_components != 1:
                raise GraphError(f"graph must be connected, found {n_components} components")

    @property
    def n_nodes(self) -> int:
        return self.measure.shape[0]

    @property
    def n_edges(self) -> int:
        return self.tails.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """(E, n) matrix with -1 at the tail and +1 at the head of every edge."""
        rows = np.repeat(np.arange(self.n_edges), 2)
        cols = np.stack([self.tails, self.heads], axis=1).ravel()
        vals = np.tile([-1.0, 1.0], self.n_edges)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_edges, self.n_nodes))

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        a = sparse.coo_matrix(
            (np.ones(self.n_edges), (self.tails, self.heads)),
            shape=(self.n_nodes, self.n_nodes),
        )
        return (a + a.T).tocsr()

    def index_of(self, node_id: int) -> int:
        try:
            return self.node_ids.index(int(node_id))
        except ValueError as e:
            raise GraphError(f"unknown node id {node_id}") from e

    def reversed(self, edge_indices: Sequence[int]) -> "WeightedGraph":
        """Same graph with the orientation of the given edges flipped."""
        tails = self.tails.copy()
        heads = self.heads.copy()
        idx = np.asarray(edge_indices, dtype=np.int64)
        tails[idx], heads[idx] = self.heads[idx], self.tails[idx]
        return WeightedGraph(
            tails=tails,
            heads=heads,
            weights=self.weights.copy(),
            measure=self.measure.copy(),
            boundary=self.boundary.copy(),
            node_ids=self.node_ids,
            coords=None if self.coords is None else self.coords.copy(),
            root=self.root,
        )

    def without_boundary(self) -> "WeightedGraph":
        return WeightedGraph(
            tails=self.tails.copy(),
            heads=self.heads.copy(),
            weights=self.weights.copy(),
            measure=self.measure.copy(),
            boundary=np.zeros(self.n_nodes, dtype=bool),
            node_ids=self.node_ids,
            coords=None if self.coords is None else self.coords.copy(),
            root=self.root,
        )


# ---- Field helpers ----
def as_node_field(g: WeightedGraph, u: npt.ArrayLike) -> np.ndarray:
    ua = np.asarray(u, dtype=float)
    if ua.ndim not in (1, 2) or ua.shape[0] != g.n_nodes:
        raise GraphError(f"node field must have shape (n,) or (n, k) with n={g.n_nodes}, got {ua.shape}")
    if not np.all(np.isfinite(ua)):
        raise GraphError("node field has non-finite entries")
    return ua


def as_edge_field(g: WeightedGraph, X: npt.ArrayLike) -> np.ndarray:
    Xa = np.asarray(X, dtype=float)
    if Xa.ndim not in (1, 2) or Xa.shape[0] != g.n_edges:
        raise GraphError(f"edge field must have shape (E,) or (E, k) with E={g.n_edges}, got {Xa.shape}")
    return Xa


def row_norms(X: np.ndarray) -> np.ndarray:
    return np.abs(X) if X.ndim == 1 else np.linalg.norm(X, axis=1)


def pairing(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise inner product of two edge (or node) fields of equal shape."""
    return X * Y if X.ndim == 1 else np.sum(X * Y, axis=1)


def _check_p(p: float) -> float:
    p = float(p)
    if not np.isfinite(p) or p < 2.0:
        raise GraphError(f"exponent p must be >= 2, got {p}")
    return p


# ---- Operators ----
def edge_gradient(g: WeightedGraph, u: npt.ArrayLike) -> EdgeField:
    return g.incidence @ as_node_field(g, u)


def divergence(g: WeightedGraph, X: npt.ArrayLike) -> NodeField:
    Xa = as_edge_field(g, X)
    flux = g.weights * Xa if Xa.ndim == 1 else g.weights[:, None] * Xa
    out = -(g.incidence.T @ flux)
    return out / g.measure if out.ndim == 1 else out / g.measure[:, None]


def p_flux(du: np.ndarray, p: float) -> np.ndarray:
    """|du|^(p-2) du edgewise (0 on flat edges)."""
    if du.ndim == 1:
        return duality_map(du[:, None], p)[:, 0]
    return duality_map(du, p)


def p_laplacian(g: WeightedGraph, u: npt.ArrayLike, p: float) -> NodeField:
    p = _check_p(p)
    return divergence(g, p_flux(edge_gradient(g, u), p))


def p_energy(g: WeightedGraph, u: npt.ArrayLike, p: float) -> float:
    p = _check_p(p)
    return float(np.sum(g.weights * row_norms(edge_gradient(g, u)) ** p) / p)


def p_energy_gradient(g: WeightedGraph, u: npt.ArrayLike, p: float) -> NodeField:
    lap = p_laplacian(g, u, p)
    return -(g.measure * lap if lap.ndim == 1 else g.measure[:, None] * lap)


def lq_norm(g: WeightedGraph, X: npt.ArrayLike, q: float) -> float:
    if q < 1:
        raise GraphError(f"norm exponent q must be >= 1, got {q}")
    Xa = as_edge_field(g, X)
    return float(np.sum(g.weights * row_norms(Xa) ** q) ** (1.0 / q))


def node_pairing(g: WeightedGraph, phi: np.ndarray, psi: np.ndarray) -> float:
    """sum_a mu_a <phi(a), psi(a)>."""
    return float(np.sum(g.measure * pairing(phi, psi)))


def summation_by_parts_residual(g: WeightedGraph, phi: npt.ArrayLike, X: npt.ArrayLike) -> float:
    phi = as_node_field(g, phi)
    Xa = as_edge_field(g, X)
    if phi.shape[1:] != Xa.shape[1:]:
        raise GraphError("node and edge fields must share the target dimension")
    edge_term = float(np.sum(g.weights * pairing(edge_gradient(g, phi), Xa)))
    return abs(node_pairing(g, phi, divergence(g, Xa)) + edge_term)


def summation_by_parts_scale(g: WeightedGraph, phi: npt.ArrayLike, X: npt.ArrayLike) -> float:
    """Magnitude of the summed terms; the residual is compared against it."""
    phi = as_node_field(g, phi)
    Xa = as_edge_field(g, X)
    node_term = np.sum(g.measure * row_norms(phi) * row_norms(divergence(g, Xa)))
    edge_term = np.sum(g.weights * row_norms(edge_gradient(g, phi)) * row_norms(Xa))
    return float(node_term + edge_term)


def coercivity_sums(
    g: WeightedGraph,
    u: npt.ArrayLike,
    v: npt.ArrayLike,
    p: float,
    edge_factor: Optional[np.ndarray] = None,
) -> Tuple[float, float]:
    """
    Edgewise monotonicity: returns
        (sum_e c_e w_e <|du|^(p-2)du - |dv|^(p-2)dv, du - dv>,
         mhck_constant(p) * sum_e c_e w_e |du - dv|^p)
    with c_e = edge_factor (default 1). The first is >= the second when c_e >= 0.
    """
    p = _check_p(p)
    du = edge_gradient(g, u)
    dv = edge_gradient(g, v)
    c = np.ones(g.n_edges) if edge_factor is None else np.asarray(edge_factor, dtype=float)
    flux = p_flux(du, p) - p_flux(dv, p)
    lhs = float(np.sum(c * g.weights * pairing(flux, du - dv)))
    rhs = mhck_constant(p) * float(np.sum(c * g.weights * row_norms(du - dv) ** p))
    return lhs, rhs


def hop_distance(g: WeightedGraph, root: Optional[int] = None) -> np.ndarray:
    root = g.root if root is None else root
    return csgraph.shortest_path(g.adjacency, unweighted=True, indices=root)


def radius_from_root(g: WeightedGraph) -> np.ndarray:
    """Euclidean distance to the root when coordinates exist, hop distance otherwise."""
    if g.coords is not None:
        return np.linalg.norm((g.coords - g.coords[g.root]).astype(float), axis=1)
    return hop_distance(g)


# ---- Constructors ----
def _from_coords(coords: np.ndarray, boundary: np.ndarray, root: int) -> WeightedGraph:
    n, d = coords.shape
    lookup = {tuple(c): i for i, c in enumerate(coords.tolist())}
    tails, heads = [], []
    for i, c in enumerate(coords.tolist()):
        for axis in range(d):
            nb = list(c)
            nb[axis] += 1
            j = lookup.get(tuple(nb))
            if j is not None:
                tails.append(i)
                heads.append(j)
    return WeightedGraph(
        tails=np.array(tails, dtype=np.int64),
        heads=np.array(heads, dtype=np.int64),
        weights=np.ones(len(tails)),
        measure=np.ones(n),
        boundary=boundary,
        coords=coords,
        root=root,
    )


def lattice_ball_graph(dim: int, radius: int) -> WeightedGraph:
    """
    Nodes of Z^dim in the closed Euclidean ball of the given radius; a node is on the
    boundary when one of its lattice neighbours falls outside the ball.
    """
    if dim < 1 or radius < 1:
        raise GraphError("lattice balls need dim >= 1 and radius >= 1")
    axis = np.arange(-radius, radius + 1)
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    inside = np.sum(grid**2, axis=1) <= radius**2
    coords = grid[inside]
    r2 = radius**2
    boundary = np.zeros(coords.shape[0], dtype=bool)
    for a in range(dim):
        for step in (-1, 1):
            shifted = coords.copy()
            shifted[:, a] += step
            boundary |= np.sum(shifted**2, axis=1) > r2
    root = int(np.flatnonzero(np.all(coords == 0, axis=1))[0])
    return _from_coords(coords, boundary, root)


def path_graph(radius: int) -> WeightedGraph:
    """Segment [-radius, radius] of Z, boundary {+-radius}, root 0."""
    return lattice_ball_graph(1, radius)


def ray_graph(length: int) -> WeightedGraph:
    """Segment [0, length] of N, boundary {length}, root 0."""
    if length < 1:
        raise GraphError("ray length must be >= 1")
    coords = np.arange(length + 1).reshape(-1, 1)
    boundary = np.zeros(length + 1, dtype=bool)
    boundary[-1] = True
    return _from_coords(coords, boundary, 0)


def chain_graph(
    n: int, weights: Optional[Sequence[float]] = None, measure: Optional[Sequence[float]] = None
) -> WeightedGraph:
    """Path 0-1-...-(n-1) with edges (i, i+1) and both ends on the boundary."""
    if n < 2:
        raise GraphError("chain needs at least two nodes")
    boundary = np.zeros(n, dtype=bool)
    boundary[[0, -1]] = True
    return WeightedGraph(
        tails=np.arange(n - 1),
        heads=np.arange(1, n),
        weights=np.ones(n - 1) if weights is None else np.asarray(weights, dtype=float),
        measure=np.ones(n) if measure is None else np.asarray(measure, dtype=float),
        boundary=boundary,
    )


def cycle_graph(n: int, weights: Optional[Sequence[float]] = None) -> WeightedGraph:
    if n < 3:
        raise GraphError("cycle needs at least three nodes")
    return WeightedGraph(
        tails=np.arange(n),
        heads=(np.arange(n) + 1) % n,
        weights=np.ones(n) if weights is None else np.asarray(weights, dtype=float),
        measure=np.ones(n),
        boundary=np.zeros(n, dtype=bool),
    )


def random_connected_graph(
    rng: np.random.Generator, n: int, extra_edges: Optional[int] = None
) -> WeightedGraph:
    """Random spanning tree plus extra edges, random orientation, weights and measures."""
    if n < 2:
        raise GraphError("random graphs need at least two nodes")
    order = rng.permutation(n)
    pairs = set()
    for i in range(1, n):
        j = order[rng.integers(0, i)]
        a, b = int(order[i]), int(j)
        pairs.add((min(a, b), max(a, b)))
    extra = n if extra_edges is None else extra_edges
    attempts = 0
    while extra > 0 and attempts < 20 * n:
        a, b = (int(x) for x in rng.integers(0, n, size=2))
        attempts += 1
        if a == b or (min(a, b), max(a, b)) in pairs:
            continue
        pairs.add((min(a, b), max(a, b)))
        extra -= 1
    edges = np.array(sorted(pairs), dtype=np.int64)
    flip = rng.random(edges.shape[0]) < 0.5
    edges[flip] = edges[flip][:, ::-1]
    return WeightedGraph(
        tails=edges[:, 0],
        heads=edges[:, 1],
        weights=rng.uniform(0.2, 3.0, size=edges.shape[0]),
        measure=rng.uniform(0.2, 3.0, size=n),
        boundary=np.zeros(n, dtype=bool),
    )
