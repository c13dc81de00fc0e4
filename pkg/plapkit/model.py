# plapkit/model.py
"""
Rotationally symmetric model manifolds dr^2 + sigma(r)^2 dtheta^2 and the
volume-growth test for p-parabolicity:

    M is p-parabolic provided  (1 / vol(dB_r))^(1/(p-1))  is not integrable at +infinity.

The test is one-directional, so the verdict is Parabolic or Inconclusive.
"""
import json
import logging
import math
import warnings
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, model_validator
from scipy import integrate, special

from .config import settings

logger = logging.getLogger(__name__)


class ProfileError(ValueError):
    pass


class QuadratureError(Exception):
    pass


class ModelProfile(BaseModel):
    kind: Literal["power", "exponential", "tabulated"]
    parameter: Optional[float] = None
    samples: Optional[List[Tuple[float, float]]] = None

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check(self) -> "ModelProfile":
        if self.kind == "tabulated":
            if not self.samples or len(self.samples) < 2:
                raise ValueError("tabulated profile needs at least two samples")
            r = np.array([s[0] for s in self.samples], dtype=float)
            sigma = np.array([s[1] for s in self.samples], dtype=float)
            if np.any(r <= 0) or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated radii must be positive and strictly increasing")
            if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
                raise ValueError("tabulated sigma values must be positive and finite")
        elif self.parameter is None or not math.isfinite(self.parameter):
            raise ValueError(f"{self.kind} profile needs a finite parameter")
        return self

    @classmethod
    def parse(cls, text: str) -> "ModelProfile":
        """'power:1', 'exponential:0.5', or a path to a JSON profile file."""
        kind, sep, value = text.partition(":")
        if sep and kind in ("power", "exponential"):
            try:
                return cls(kind=kind, parameter=float(value))
            except ValueError as e:
                raise ProfileError(f"invalid profile {text!r}: {e}") from e
        path = Path(text)
        if not path.exists():
            raise ProfileError(f"unknown profile {text!r}")
        try:
            return cls.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except ValueError as e:
            raise ProfileError(f"invalid profile file {path}: {e}") from e

    @property
    def domain(self) -> Tuple[float, float]:
        if self.kind == "tabulated":
            return self.samples[0][0], self.samples[-1][0]
        return 0.0, math.inf

    def _check_radius(self, r: np.ndarray) -> None:
        lo, hi = self.domain
        if self.kind == "power":
            if np.any(r <= 0):
                raise ProfileError("power profiles are defined for r > 0")
        elif np.any(r < lo) or np.any(r > hi):
            raise ProfileError(f"radius outside profile range [{lo}, {hi}]")

    def log_sigma(self, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        ra = np.asarray(r, dtype=float)
        self._check_radius(ra)
        if self.kind == "power":
            out = self.parameter * np.log(ra)
        elif self.kind == "exponential":
            out = self.parameter * ra
        else:
            table = np.array(self.samples, dtype=float)
            out = np.interp(np.log(ra), np.log(table[:, 0]), np.log(table[:, 1]))
        return float(out) if out.ndim == 0 else out

    def sigma(self, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return np.exp(self.log_sigma(r))

    def log_sigma_at_log(self, s: float) -> float:
        """log sigma(e^s); power profiles never form e^s, so any finite s is accepted."""
        if self.kind == "power":
            return self.parameter * s
        if self.kind == "exponential":
            if self.parameter == 0.0:
                return 0.0
            with np.errstate(over="ignore"):
                return float(self.parameter * np.exp(s))
        return float(self.log_sigma(math.exp(s)))


class ParabolicityVerdict(BaseModel):
    verdict: Literal["Parabolic", "Inconclusive"]
    tail_exponent_estimate: float
    integral_values: List[Tuple[float, float]]
    m: int
    p: float
    r0: float
    r_max: float
    delta: float


def _check_mp(m: int, p: float) -> None:
    if int(m) != m or m < 2:
        raise ProfileError(f"dimension m must be an integer >= 2, got {m}")
    if not math.isfinite(p) or p < 2:
        raise ProfileError(f"exponent p must be >= 2, got {p}")


def unit_sphere_area(m: int) -> float:
    """Area of the unit sphere S^(m-1) in R^m."""
    return 2.0 * math.pi ** (m / 2.0) / special.gamma(m / 2.0)


def log_boundary_volume(profile: ModelProfile, m: int, r):
    return math.log(unit_sphere_area(m)) + (m - 1) * np.asarray(profile.log_sigma(r))


def boundary_volume(profile: ModelProfile, m: int, r: float) -> float:
    _check_mp(m, 2.0)
    return float(unit_sphere_area(m) * profile.sigma(r) ** (m - 1))


def log_integrand(profile: ModelProfile, m: int, p: float, r):
    return -log_boundary_volume(profile, m, r) / (p - 1.0)


def parabolicity_integrand(profile: ModelProfile, m: int, p: float, r: float) -> float:
    _check_mp(m, p)
    return float(np.exp(log_integrand(profile, m, p, r)))


def parabolicity_integral(
    profile: ModelProfile,
    m: int,
    p: float,
    r0: float,
    R: float,
    epsrel: Optional[float] = None,
) -> float:
    """
    Partial integral of the parabolicity integrand over [r0, R]; R may be +inf.

    Integrates in s = log r, where power profiles give a smooth exponential integrand.
    """
    _check_mp(m, p)
    if not (r0 > 0) or R < r0:
        raise ProfileError(f"need 0 < r0 <= R, got r0={r0}, R={R}")
    if R == r0:
        return 0.0
    epsrel = settings.QUAD_EPSREL if epsrel is None else epsrel

    log_area = math.log(unit_sphere_area(m))

    def f(s: float) -> float:
        log_value = s - (log_area + (m - 1) * profile.log_sigma_at_log(s)) / (p - 1.0)
        with np.errstate(over="ignore"):
            value = float(np.exp(log_value))
        if not math.isfinite(value):
            raise QuadratureError(f"non-finite integrand at log r={s}")
        return value

    upper = math.inf if math.isinf(R) else math.log(R)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                f, math.log(r0), upper, epsabs=0.0, epsrel=epsrel, limit=settings.QUAD_LIMIT
            )
        except (integrate.IntegrationWarning, OverflowError) as e:
            raise QuadratureError(f"quadrature failed on [{r0}, {R}]: {e}") from e
    if not math.isfinite(value):
        raise QuadratureError(f"quadrature returned {value} on [{r0}, {R}]")
    logger.debug("integral [%g, %g] = %.17g (err %.3g)", r0, R, value, abserr)
    return value


def power_profile_integral(k: float, m: int, p: float, r0: float, R: float) -> float:
    """Closed form of parabolicity_integral for sigma(r) = r^k."""
    c = unit_sphere_area(m) ** (-1.0 / (p - 1.0))
    beta = k * (m - 1) / (p - 1.0)
    if beta == 1.0:
        return c * (math.log(R) - math.log(r0))
    if math.isinf(R):
        if beta < 1.0:
            return math.inf
        return c * r0 ** (1.0 - beta) / (beta - 1.0)
    return c * (R ** (1.0 - beta) - r0 ** (1.0 - beta)) / (1.0 - beta)


def _tail_window(profile: ModelProfile, r0: float, r_max: float) -> np.ndarray:
    if profile.kind == "tabulated":
        radii = np.array([s[0] for s in profile.samples], dtype=float)
        top = radii[-1]
        window = radii[radii >= top / 10.0]
        if top / radii[0] < 10.0 or window.size < 3:
            raise ProfileError(
                "tabulated profile too short for tail estimation: "
                "needs a full decade and at least 3 samples in its last decade"
            )
        return window
    return np.geomspace(r_max / 10.0, r_max, 64)


def classify_model(
    profile: ModelProfile,
    m: int,
    p: float,
    r0: Optional[float] = None,
    r_max: Optional[float] = None,
    delta: Optional[float] = None,
) -> ParabolicityVerdict:
    _check_mp(m, p)
    delta = settings.MODEL_DELTA if delta is None else delta
    if profile.kind == "tabulated":
        # the table fixes the working range
        lo, hi = profile.domain
        r0 = lo if r0 is None else max(r0, lo)
        r_max = hi
    else:
        r0 = settings.MODEL_R0 if r0 is None else r0
        r_max = settings.MODEL_R_MAX if r_max is None else r_max
    if not (0 < r0 < r_max):
        raise ProfileError(f"need 0 < r0 < r_max, got r0={r0}, r_max={r_max}")

    window = _tail_window(profile, r0, r_max)
    slope = float(np.polyfit(np.log(window), log_integrand(profile, m, p, window), 1)[0])

    # partial integrals on a decade grid, for plotting
    grid = [r0]
    while grid[-1] * 10.0 < r_max:
        grid.append(grid[-1] * 10.0)
    grid.append(r_max)
    integral_values = []
    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        try:
            total += parabolicity_integral(profile, m, p, a, b)
        except QuadratureError as e:
            # integrand blew up on this decade; the table stops here
            logger.warning("partial integrals truncated at R=%g: %s", a, e)
            break
        integral_values.append((b, total))

    verdict = "Parabolic" if slope >= -1.0 - delta else "Inconclusive"
    logger.info("model %s m=%s p=%s: slope %.6f -> %s", profile.kind, m, p, slope, verdict)
    return ParabolicityVerdict(
        verdict=verdict,
        tail_exponent_estimate=slope,
        integral_values=integral_values,
        m=int(m),
        p=float(p),
        r0=float(r0),
        r_max=float(r_max),
        delta=float(delta),
    )
