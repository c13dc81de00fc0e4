# plapkit/vectorineq.py
"""
Pointwise vector inequalities behind the comparison principles.

Every inequality is exposed as a *gap* (left side minus right side), returned
signed and unclamped, so that a negative value is a detectable violation.
All functions accept a single vector (1-D array) or a batch of vectors
(last axis = vector axis) and return a float or an array accordingly.

Note on constants: the monotonicity bound uses 2 / (p (2^(p-1) - 1)) everywhere.
A constant 2 / (2^(p-1) - 1) also appears in the literature's proof of the scalar
comparison principle; it is not used here.
"""
import logging
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np
import numpy.typing as npt

from .config import settings

logger = logging.getLogger(__name__)

ArrayLike = Union[npt.ArrayLike, np.ndarray]
GapValue = Union[float, np.ndarray]


class InequalityInputError(ValueError):
    pass


def _check_p(p: float) -> float:
    p = float(p)
    if not np.isfinite(p) or p < 2.0:
        raise InequalityInputError(f"exponent p must be >= 2, got {p}")
    return p


def _pair(x: ArrayLike, y: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.ndim == 0 or ya.ndim == 0:
        raise InequalityInputError("vectors must have at least one coordinate")
    if xa.shape != ya.shape:
        raise InequalityInputError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    if xa.shape[-1] < 1:
        raise InequalityInputError("vectors must have at least one coordinate")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InequalityInputError("vector entries must be finite")
    return xa, ya


def _out(value: np.ndarray) -> GapValue:
    return float(value) if np.ndim(value) == 0 else value


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)


def _dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sum(x * y, axis=-1)


def _power_weight(norm: np.ndarray, exponent: float) -> np.ndarray:
    # |y|^(p-2) with the continuous extension 0 at y = 0 (only multiplied by terms vanishing there)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, safe**exponent, 0.0)


def duality_map(x: ArrayLike, p: float) -> np.ndarray:
    """|x|^(p-2) x, extended by 0 at the origin."""
    p = _check_p(p)
    xa = np.asarray(x, dtype=float)
    return _power_weight(_norm(xa), p - 2.0)[..., None] * xa


def mhck_constant(p: float) -> float:
    p = _check_p(p)
    return 2.0 / (p * (2.0 ** (p - 1.0) - 1.0))


def lindqvist_gap(x: ArrayLike, y: ArrayLike, p: float) -> GapValue:
    """
    |x|^p + (p-1)|y|^p - p|y|^(p-2)<x,y> - |x-y|^p / (2^(p-1) - 1).

    Nonnegative for every pair when p >= 2.
    """
    p = _check_p(p)
    xa, ya = _pair(x, y)
    nx, ny = _norm(xa), _norm(ya)
    gap = (
        nx**p
        + (p - 1.0) * ny**p
        - p * _power_weight(ny, p - 2.0) * _dot(xa, ya)
        - _norm(xa - ya) ** p / (2.0 ** (p - 1.0) - 1.0)
    )
    return _out(gap)


def mhck_pairing(x: ArrayLike, y: ArrayLike, p: float) -> GapValue:
    """<|x|^(p-2)x - |y|^(p-2)y, x - y>."""
    p = _check_p(p)
    xa, ya = _pair(x, y)
    return _out(_dot(duality_map(xa, p) - duality_map(ya, p), xa - ya))


def mhck_pairing_expanded(x: ArrayLike, y: ArrayLike, p: float) -> GapValue:
    """|x|^p + |y|^p - <x,y>(|x|^(p-2) + |y|^(p-2)); equals mhck_pairing."""
    p = _check_p(p)
    xa, ya = _pair(x, y)
    nx, ny = _norm(xa), _norm(ya)
    weights = _power_weight(nx, p - 2.0) + _power_weight(ny, p - 2.0)
    return _out(nx**p + ny**p - _dot(xa, ya) * weights)


def mhck_gap(x: ArrayLike, y: ArrayLike, p: float) -> GapValue:
    p = _check_p(p)
    xa, ya = _pair(x, y)
    pairing = _dot(duality_map(xa, p) - duality_map(ya, p), xa - ya)
    return _out(pairing - mhck_constant(p) * _norm(xa - ya) ** p)


def _mean_curvature_field(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = np.sqrt(1.0 + _norm(x) ** 2)
    return x / s[..., None], s


def collin_krust_pairing(x: ArrayLike, y: ArrayLike) -> GapValue:
    """<x/sqrt(1+|x|^2) - y/sqrt(1+|y|^2), x - y>; zero exactly when x = y."""
    xa, ya = _pair(x, y)
    a, _ = _mean_curvature_field(xa)
    b, _ = _mean_curvature_field(ya)
    return _out(_dot(a - b, xa - ya))


def classical_mhck_gap(x: ArrayLike, y: ArrayLike) -> GapValue:
    """
    Gap of <a - b, x - y> >= (s_x + s_y)/2 |a - b|^2, a = x/s_x, s_x = sqrt(1+|x|^2).

    Evaluated through the identity gap = (s_x + s_y)(s_x - s_y)^2 / (2 s_x^2 s_y^2),
    which avoids cancellation. The gap vanishes on |x| = |y|.
    """
    xa, ya = _pair(x, y)
    nx, ny = _norm(xa), _norm(ya)
    sx = np.sqrt(1.0 + nx**2)
    sy = np.sqrt(1.0 + ny**2)
    # s_x - s_y = (|x| - |y|)(|x| + |y|) / (s_x + s_y)
    ds = (nx - ny) * (nx + ny) / (sx + sy)
    return _out((sx + sy) * ds**2 / (2.0 * sx**2 * sy**2))


def classical_mhck_gap_direct(x: ArrayLike, y: ArrayLike) -> GapValue:
    """Same gap as classical_mhck_gap, evaluated term by term."""
    xa, ya = _pair(x, y)
    a, sx = _mean_curvature_field(xa)
    b, sy = _mean_curvature_field(ya)
    return _out(_dot(a - b, xa - ya) - 0.5 * (sx + sy) * _norm(a - b) ** 2)


# ---- Sampling ----
def sample_pairs(
    rng: np.random.Generator, count: int, dim: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian pairs with a share of adversarial corners: collinear, antipodal,
    near-equal and zero vectors. Returns two (count, dim) arrays.
    """
    if count < 1 or dim < 1:
        raise InequalityInputError("count and dim must be positive")
    x = rng.standard_normal((count, dim))
    y = rng.standard_normal((count, dim))
    scales = np.exp(rng.uniform(-3.0, 3.0, size=(count, 1)))
    x *= scales
    y *= scales

    kind = rng.integers(0, 10, size=count)
    t = rng.uniform(-3.0, 3.0, size=(count, 1))
    collinear = kind == 0
    y[collinear] = t[collinear] * x[collinear]
    antipodal = kind == 1
    y[antipodal] = -x[antipodal]
    near = kind == 2
    y[near] = x[near] * (1.0 + 1e-6 * rng.standard_normal((int(near.sum()), 1)))
    y[kind == 3] = 0.0
    x[kind == 4] = 0.0
    equal = kind == 5
    y[equal] = x[equal]
    return x, y


def _relative(gap: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return gap / np.maximum(scale, np.finfo(float).tiny)


def check_pairs(x: np.ndarray, y: np.ndarray, p: float) -> Dict[str, float]:
    """Worst-case statistics of every inequality on one batch of pairs."""
    p = _check_p(p)
    scale = _norm(x) ** p + _norm(y) ** p
    lind = np.asarray(lindqvist_gap(x, y, p))
    lind_swapped = np.asarray(lindqvist_gap(y, x, p))
    mhck = np.asarray(mhck_gap(x, y, p))
    symmetrized = lind + lind_swapped - p * mhck
    stats = {
        "min_lindqvist_rel": float(np.min(_relative(lind, scale))),
        "min_mhck_rel": float(np.min(_relative(mhck, scale))),
        "max_symmetrization_rel": float(np.max(np.abs(_relative(symmetrized, scale)))),
        "min_classical_gap": float(np.min(classical_mhck_gap(x, y))),
    }
    if p == 2.0:
        exactness = np.maximum(np.abs(lind), np.abs(mhck))
        stats["max_p2_rel"] = float(np.max(_relative(exactness, scale)))
    return stats


def run_inequality_suite(
    p_values: Iterable[float],
    dims: Iterable[int],
    samples: int,
    seed: int = 0,
    chunk: int = 50_000,
) -> List[Dict[str, float]]:
    """
    Seeded sampling over every (p, dim) combination, `samples` pairs in total per p.
    Returns one row of worst-case statistics per p.
    """
    dims = list(dims)
    if not dims:
        raise InequalityInputError("at least one dimension is required")
    rng = np.random.default_rng(seed)
    rows = []
    for p in p_values:
        p = _check_p(p)
        per_dim = max(1, samples // len(dims))
        worst: Dict[str, float] = {}
        for dim in dims:
            remaining = per_dim
            while remaining > 0:
                n = min(chunk, remaining)
                x, y = sample_pairs(rng, n, dim)
                for key, value in check_pairs(x, y, p).items():
                    if key.startswith("min_"):
                        worst[key] = min(worst.get(key, np.inf), value)
                    else:
                        worst[key] = max(worst.get(key, -np.inf), value)
                remaining -= n
        row = {"p": p, "samples": per_dim * len(dims), **worst}
        logger.debug("inequality suite p=%s: %s", p, row)
        rows.append(row)
    return rows


def suite_passes(rows: List[Dict[str, float]], tol: float | None = None) -> bool:
    tol = settings.INEQ_REL_TOL if tol is None else tol
    for row in rows:
        if row["min_lindqvist_rel"] < -tol or row["min_mhck_rel"] < -tol:
            return False
        if row["min_classical_gap"] < 0.0:
            return False
        if row.get("max_p2_rel", 0.0) > settings.INEQ_P2_TOL:
            return False
    return True
