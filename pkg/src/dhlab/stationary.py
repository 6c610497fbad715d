"""Stationary densities, the adjoint of the generator, and the damping
field that makes a prescribed density invariant.

For the two-sigma family the adjoint of the generator acts on a C^2
density g as

    L*g = 2 s^2 g_yy - y g_x + [s^2 y beta + V'] g_y + s^2 d(y beta)/dy g

and L*g = 0 characterizes stationarity. Fixing g and V and solving for the
damping leads to a first-order linear ODE in y for xi = y*beta, solved by
variation of constants:

    xi_g(x, y) = (1 / (s^2 g(x, y))) *
                 integral_0^y [z g_x - V'(x) g_y - 2 s^2 g_yy](x, z) dz.

The sign of the second-derivative term follows from integrating the
adjoint identity s^2 d(xi g)/dy = y g_x - V' g_y - 2 s^2 g_yy in y; it is
pinned down by the Gaussian family, whose recovered damping must equal
its true constant (beta = eta, xi = eta * y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from .models import CoefficientField, DampingModel, Potential, QUADRATIC

QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-9, limit=300)


class PositivityError(ValueError):
    """Density not strictly positive where the inverse map needs it."""


@dataclass
class DensityModel:
    """Evaluable density with first and second partial derivatives.

    ``value``, ``dx``, ``dy``, ``dyy`` accept scalars or arrays. The support
    rectangle bounds the region carrying essentially all the mass; it is
    used by mass checks and samplers, not by evaluation.
    """

    value: Callable
    dx: Callable
    dy: Callable
    dyy: Callable
    support: Tuple[Tuple[float, float], Tuple[float, float]]
    normalization: float = 1.0
    sampler: Optional[Callable] = None
    name: str = "density"

    def sample(self, rng: np.random.Generator, n: int):
        if self.sampler is None:
            raise ValueError(f"{self.name} has no sampler attached")
        return self.sampler(rng, n)

    def check_derivatives(self, grid_x, grid_y, step: float = 1e-5,
                          tol: float = 1e-5) -> bool:
        """Central-difference consistency of dx, dy, dyy on a grid."""
        for x in np.asarray(grid_x, dtype=float):
            for y in np.asarray(grid_y, dtype=float):
                fdx = (self.value(x + step, y) - self.value(x - step, y)) / (2 * step)
                fdy = (self.value(x, y + step) - self.value(x, y - step)) / (2 * step)
                fdyy = (self.dy(x, y + step) - self.dy(x, y - step)) / (2 * step)
                scale = 1.0 + abs(self.value(x, y))
                if abs(fdx - self.dx(x, y)) > tol * scale:
                    return False
                if abs(fdy - self.dy(x, y)) > tol * scale:
                    return False
                if abs(fdyy - self.dyy(x, y)) > tol * (1.0 + abs(self.dyy(x, y))):
                    return False
        return True

    def mass(self) -> float:
        """Quadrature of the density over its support rectangle."""
        (xlo, xhi), (ylo, yhi) = self.support

        def x_slice(x):
            return quad(lambda y: self.value(x, y), ylo, yhi, **QUAD_OPTS)[0]

        return quad(x_slice, xlo, xhi, epsabs=1e-11, epsrel=1e-9, limit=300)[0]

    def check_mass(self, tol: float = 1e-4) -> bool:
        """Quadrature over the support matches the declared normalization."""
        return abs(self.mass() - self.normalization) <= tol

    @classmethod
    def from_callable(cls, value: Callable, support, step: float = 1e-5,
                      name: str = "density") -> "DensityModel":
        """Wrap a bare evaluator with finite-difference derivatives."""

        def dx(x, y):
            return (value(x + step, y) - value(x - step, y)) / (2 * step)

        def dy(x, y):
            return (value(x, y + step) - value(x, y - step)) / (2 * step)

        def dyy(x, y):
            return (value(x, y + step) - 2 * value(x, y)
                    + value(x, y - step)) / step ** 2

        return cls(value=value, dx=dx, dy=dy, dyy=dyy, support=support,
                   name=name)


def _dyb_dy(beta: CoefficientField, x: float, y: float,
            step: float = None) -> float:
    """d(y*beta)/dy: analytic when the field supplies it, else central FD."""
    if beta.constant is not None:
        return beta.constant
    if beta.dyb is not None:
        return beta.dyb(x, y)
    if beta.dy is not None:
        return beta(x, y) + y * beta.dy(x, y)
    if step is None:
        step = 1e-5 * max(1.0, abs(y))
    return ((y + step) * beta(x, y + step)
            - (y - step) * beta(x, y - step)) / (2 * step)


def adjoint_apply(potential: Potential, beta: CoefficientField, sigma: float,
                  g: DensityModel, x: float, y: float) -> float:
    """Pointwise value of the adjoint generator applied to g.

    Zero (up to derivative tolerance) exactly when (g, beta) is a
    stationary pair for the given potential.
    """
    s2 = sigma * sigma
    return float(2 * s2 * g.dyy(x, y)
                 - y * g.dx(x, y)
                 + (s2 * y * beta(x, y) + potential.derivative(x)) * g.dy(x, y)
                 + s2 * _dyb_dy(beta, x, y) * g.value(x, y))


def integral_drift_part(g: DensityModel, sigma: float, x: float,
                        y: float) -> float:
    """(1/s^2) * integral_0^y z g_x(x, z) dz (oriented)."""
    val = quad(lambda z: z * g.dx(x, z), 0.0, y, **QUAD_OPTS)[0]
    return val / sigma ** 2


def integral_potential_part(g: DensityModel, potential: Potential,
                            sigma: float, x: float, y: float) -> float:
    """-(V'(x)/s^2) * [g(x, y) - g(x, 0)]; the potential term integrates exactly."""
    return -potential.derivative(x) * (g.value(x, y) - g.value(x, 0.0)) / sigma ** 2


def integral_diffusion_part(g: DensityModel, x: float, y: float) -> float:
    """-2 * [g_y(x, y) - g_y(x, 0)]; the diffusion term integrates exactly."""
    return -2.0 * (g.dy(x, y) - g.dy(x, 0.0))


def xi_numerator(g: DensityModel, potential: Potential, sigma: float,
                 x: float, y: float) -> float:
    """The y-integral solving the stationarity ODE, before division by g.

    Linear in g; split into three separately testable parts.
    """
    return (integral_drift_part(g, sigma, x, y)
            + integral_potential_part(g, potential, sigma, x, y)
            + integral_diffusion_part(g, x, y))


def xi_from_density(g: DensityModel, potential: Potential, sigma: float,
                    x: float, y: float) -> float:
    """xi_g(x, y) = y * beta_g(x, y); exactly zero at y = 0."""
    gv = g.value(x, y)
    if not gv > 0:
        raise PositivityError(f"density not positive at ({x}, {y}): {gv}")
    if y == 0.0:
        return 0.0
    return xi_numerator(g, potential, sigma, x, y) / gv


def beta_from_density(g: DensityModel, potential: Potential, sigma: float,
                      x: float, y: float, y_switch: float = 1e-6) -> float:
    """Damping field making g stationary for the given potential.

    Away from y = 0 this is xi_g / y; within ``y_switch`` of zero the
    removable singularity is evaluated through its explicit limit
    (1/(s^2 g)) [-V' g_y - 2 s^2 g_yy] at (x, 0).
    """
    if abs(y) > y_switch:
        return xi_from_density(g, potential, sigma, x, y) / y
    g0 = g.value(x, 0.0)
    if not g0 > 0:
        raise PositivityError(f"density not positive at ({x}, 0): {g0}")
    s2 = sigma * sigma
    return float((-potential.derivative(x) * g.dy(x, 0.0)
                  - 2.0 * s2 * g.dyy(x, 0.0)) / (s2 * g0))


@dataclass(frozen=True)
class GaussianStationary:
    """Gaussian stationary law exp(-(eta/2)[y^2/2 + x^2]) with its constant."""

    eta: float

    @property
    def c_eta(self) -> float:
        return self.eta / (2.0 * math.sqrt(2.0) * math.pi)

    def density(self) -> DensityModel:
        return gaussian_density(self.eta)


def gaussian_density(eta: float, name: str = "gaussian-eta") -> DensityModel:
    """Gaussian density with analytic derivatives and an exact sampler."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    c = eta / (2.0 * math.sqrt(2.0) * math.pi)
    half = 0.5 * eta

    def value(x, y):
        return c * np.exp(-half * (0.5 * y * y + x * x))

    def dx(x, y):
        return -eta * x * value(x, y)

    def dy(x, y):
        return -half * y * value(x, y)

    def dyy(x, y):
        return (half * half * y * y - half) * value(x, y)

    sx = 1.0 / math.sqrt(eta)
    sy = math.sqrt(2.0 / eta)

    def sampler(rng, n):
        return sx * rng.standard_normal(n), sy * rng.standard_normal(n)

    lim_x = 10.0 * sx
    lim_y = 10.0 * sy
    return DensityModel(value=value, dx=dx, dy=dy, dyy=dyy,
                        support=((-lim_x, lim_x), (-lim_y, lim_y)),
                        sampler=sampler, name=name)


def gaussian_model(eta: float, sigma: float) -> Tuple[DensityModel, DampingModel]:
    """Closed-form stationary pair: Gaussian density and constant damping.

    The two-sigma model with quadratic potential and beta == eta leaves the
    returned density invariant for every sigma > 0.
    """
    if not (eta > 0 and sigma > 0):
        raise ValueError("eta and sigma must be positive")
    density = gaussian_density(eta)
    model = DampingModel(
        a=CoefficientField.const(2.0 * sigma),
        beta=CoefficientField.const(eta),
        potential=QUADRATIC,
        sigma_form="two_sigma",
        sigma=sigma,
        name="gaussian-eta",
        stationary=density)
    return density, model


def screen_beta_range(beta_fn: Callable, rect, resolution: int,
                      r_prime: float) -> dict:
    """Grid screen of 1/R' < beta < R' on a bounded rectangle (report only)."""
    xlo, xhi, ylo, yhi = rect
    xs = np.linspace(xlo, xhi, resolution)
    ys = np.linspace(ylo, yhi, resolution)
    bmin = math.inf
    bmax = -math.inf
    for x in xs:
        for y in ys:
            b = float(beta_fn(float(x), float(y)))
            bmin = min(bmin, b)
            bmax = max(bmax, b)
    return {"beta_min": bmin, "beta_max": bmax, "r_prime": r_prime,
            "ok": (bmin > 1.0 / r_prime) and (bmax < r_prime),
            "rect": rect, "resolution": resolution}
