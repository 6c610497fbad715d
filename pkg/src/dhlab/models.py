"""Damped position/velocity SDE models and grid-based assumption checks.

The dynamics couple a position that integrates the velocity with a velocity
diffusion driven by a damping term and a potential force:

    dx = y dt
    dy = a(x, y) dB - [beta(x, y) y + V'(x)] dt        (general form)
    dy = 2 s dB   - [s^2 beta(x, y) y + V'(x)] dt      (two-sigma form)

Coefficient regularity and ergodicity conditions are checked *empirically*
on finite grids; limit conditions can only ever be reported as consistent or
inconclusive, never proven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np


class EvaluationError(RuntimeError):
    """A coefficient or potential produced a non-finite value."""


@dataclass(frozen=True)
class CoefficientField:
    """Scalar coefficient (x, y) -> real, with optional declared bounds.

    ``constant`` marks fields that do not depend on (x, y); several
    downstream computations (drift derivatives, fast simulation) use it.
    ``dy`` optionally supplies the analytic partial derivative in y.
    """

    fn: Callable[[float, float], float]
    bounds: Optional[Tuple[float, float]] = None
    constant: Optional[float] = None
    dy: Optional[Callable[[float, float], float]] = None
    dyb: Optional[Callable[[float, float], float]] = None  # d(y*beta)/dy

    @classmethod
    def const(cls, c: float) -> "CoefficientField":
        c = float(c)
        return cls(fn=lambda x, y: c, bounds=(c, c), constant=c,
                   dy=lambda x, y: 0.0)

    def __call__(self, x: float, y: float) -> float:
        return self.fn(x, y)

    def check_bounds(self, grid_x: np.ndarray, grid_y: np.ndarray,
                     tol: float = 1e-12) -> bool:
        """Sampled values on the validation grid lie within declared bounds."""
        if self.bounds is None:
            return True
        lo, hi = self.bounds
        for x in grid_x:
            for y in grid_y:
                v = self.fn(float(x), float(y))
                if not (lo - tol <= v <= hi + tol):
                    return False
        return True


@dataclass(frozen=True)
class Potential:
    """Potential V and its derivative V', both supplied explicitly.

    The derivative enters the drift directly, so it is never produced by
    numerical differentiation; ``check_derivative`` verifies consistency of
    the supplied pair on a grid instead.
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]

    def check_derivative(self, grid: np.ndarray, delta: float = 1e-5,
                         tol: float = 1e-6) -> bool:
        """Finite-difference consistency |FD - V'| <= tol * (1 + |V'|)."""
        for x in np.asarray(grid, dtype=float):
            fd = (self.value(x + delta) - self.value(x - delta)) / (2 * delta)
            dv = self.derivative(x)
            if not np.isfinite(fd) or not np.isfinite(dv):
                raise EvaluationError(f"potential not finite at x={x}")
            if abs(fd - dv) > tol * (1.0 + abs(dv)):
                return False
        return True


@dataclass
class DampingModel:
    """The SDE model: diffusion a, damping beta, potential (V, V').

    ``sigma_form`` selects between the general parametrization and the
    two-sigma family where a = 2*sigma is constant and the damping drift
    carries a sigma^2 factor.
    """

    a: CoefficientField
    beta: CoefficientField
    potential: Potential
    sigma_form: str = "general"
    sigma: Optional[float] = None
    name: str = "custom"
    stationary: Optional[object] = None  # DensityModel when known in closed form

    def __post_init__(self) -> None:
        if self.sigma_form not in ("general", "two_sigma"):
            raise ValueError(f"unknown sigma_form {self.sigma_form!r}")
        if self.sigma_form == "two_sigma":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("two_sigma form requires sigma > 0")
            if self.a.constant is None or not math.isclose(
                    self.a.constant, 2.0 * self.sigma, rel_tol=1e-12):
                raise ValueError("two_sigma form requires a == 2*sigma constant")

    @property
    def damping_scale(self) -> float:
        """Factor multiplying beta*y in the velocity drift."""
        return self.sigma ** 2 if self.sigma_form == "two_sigma" else 1.0

    def drift(self, x: float, y: float) -> Tuple[float, float]:
        return drift(self, x, y)


def drift(model: DampingModel, x: float, y: float) -> Tuple[float, float]:
    """Drift vector of the model at (x, y).

    The position component is exactly y for every model; the velocity
    component is -[scale * beta(x,y) * y + V'(x)].
    """
    dy = -(model.damping_scale * model.beta(x, y) * y
           + model.potential.derivative(x))
    if not np.isfinite(dy):
        raise EvaluationError(f"non-finite drift at ({x}, {y})")
    return (y, dy)


@dataclass
class AssumptionReport:
    """Outcome of an empirical assumption check on a grid.

    ``violations`` are definite failures on the sampled grid;
    ``inconclusive`` collects conditions that finite sampling cannot settle.
    """

    assumption: str
    stats: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    inconclusive: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _grid_1d(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(float(lo), float(hi), int(n))


def validate_hreg(model: DampingModel,
                  rect: Tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0),
                  resolution: int = 101,
                  l: float = 0.0,
                  beta_lower: Optional[float] = None) -> AssumptionReport:
    """Check coefficient regularity empirically on a rectangle.

    Reports min/max of a and max |beta| over the grid; flags a diffusion
    coefficient that is not bounded below by a positive constant, and (when
    ``beta_lower`` is given) damping that drops to ``beta_lower`` or below
    for x >= l.
    """
    xlo, xhi, ylo, yhi = rect
    if not (xlo < xhi and ylo < yhi) or resolution < 2:
        raise ValueError("grid rectangle must be nonempty with resolution >= 2")
    gx = _grid_1d(xlo, xhi, resolution)
    gy = _grid_1d(ylo, yhi, resolution)

    a_min = math.inf
    a_max = -math.inf
    b_absmax = 0.0
    b_min_right = math.inf
    for x in gx:
        for y in gy:
            av = model.a(float(x), float(y))
            bv = model.beta(float(x), float(y))
            if not np.isfinite(av) or not np.isfinite(bv):
                raise EvaluationError(
                    f"non-finite coefficient at grid point ({x}, {y})")
            a_min = min(a_min, av)
            a_max = max(a_max, av)
            b_absmax = max(b_absmax, abs(bv))
            if x >= l:
                b_min_right = min(b_min_right, bv)

    report = AssumptionReport(
        assumption="HReg",
        stats={"a_min": a_min, "a_max": a_max, "beta_abs_max": b_absmax,
               "beta_min_for_x_ge_l": b_min_right, "l": l,
               "rect": rect, "resolution": resolution},
    )
    if a_min <= 0.0:
        report.violations.append("a not bounded below by positive constant")
    if beta_lower is not None and b_min_right <= beta_lower:
        report.violations.append(
            f"beta not above {beta_lower} for x >= {l} (min {b_min_right})")
    return report


def validate_herg(potential: Potential, probe_radius: float,
                  n_probes: int = 8) -> AssumptionReport:
    """Probe V'(x)*sign(x) at increasing radii.

    A strictly increasing positive trend is reported as consistent with the
    growth condition; anything else is flagged. Finite probing cannot prove
    a limit, so the report always carries an inconclusive note.
    """
    if probe_radius <= 0:
        raise ValueError("probe_radius must be positive")
    radii = np.geomspace(min(1.0, probe_radius), probe_radius, n_probes)
    pos = np.array([potential.derivative(float(r)) for r in radii])
    neg = np.array([-potential.derivative(float(-r)) for r in radii])
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise EvaluationError("non-finite V' during growth probing")

    signed_min = np.minimum(pos, neg)
    if np.all(np.diff(signed_min) > 0) and signed_min[-1] > 0:
        trend = "increasing"
    elif np.allclose(signed_min, 0.0):
        trend = "flat"
    elif np.all(np.diff(signed_min) <= 0):
        trend = "decreasing"
    else:
        trend = "non-monotone"

    report = AssumptionReport(
        assumption="HErg",
        stats={"radii": radii.tolist(), "pos_signed": pos.tolist(),
               "neg_signed": neg.tolist(), "trend": trend},
    )
    if trend == "flat":
        report.violations.append("V' sign-trend = 0, growth condition not supported")
    elif trend != "increasing":
        report.inconclusive.append(f"sign-trend {trend}, growth condition unclear")
    report.inconclusive.append(
        "finite probing cannot verify the asymptotic growth condition")
    return report


# Plain module-level coefficient functions: stable identities let the
# simulator cache one compiled stepper per catalog model.

def a_one(x: float, y: float) -> float:
    return 1.0


def beta_half(x: float, y: float) -> float:
    return 0.5


def v_quad_half(x: float) -> float:
    return 0.5 * x * x


def vp_quad_half(x: float) -> float:
    return x


def v_quad(x: float) -> float:
    return x * x


def vp_quad(x: float) -> float:
    return 2.0 * x


def zero_fn(x: float, y: float) -> float:
    return 0.0


def v_zero(x: float) -> float:
    return 0.0


def vp_zero(x: float) -> float:
    return 0.0


QUADRATIC_HALF = Potential(value=v_quad_half, derivative=vp_quad_half)
QUADRATIC = Potential(value=v_quad, derivative=vp_quad)
FLAT = Potential(value=v_zero, derivative=vp_zero)
