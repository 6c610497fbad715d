"""Two-point priors: localized density perturbations, the damping fields
they induce, and likelihood ratios along simulated paths.

A base Gaussian-type stationary law pi0 is perturbed by a separable smooth
bump of amplitude 1/m:

    pi_tilde(x, y) = pi0(x, y) + (1/m) h((x - x0)/h1) h((y - yc)/h2)

where the bump h is built so that the induced damping field coincides with
the base damping outside the bump rectangle, exactly. Two bump variants
exist: the offset one (target velocity away from zero) needs h(0) = 1 and
vanishing integral and first moment; the centered one (target velocity
zero) additionally needs h'(0) = 0 and both one-sided first moments to
vanish, and pairs with a potential flattened around the target position.

The damping difference is evaluated through the algebraic split

    xi_tilde - xi0 = ((pi0 - pi_tilde)/pi_tilde) xi0 + I[d]/pi_tilde

so the cancellation outside the rectangle is structural rather than the
difference of two large quadratures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .models import CoefficientField, DampingModel, Potential, QUADRATIC
from .simulate import Path, SimulationConfig
from .stationary import DensityModel, PositivityError, gaussian_density

VARIANT_OFFSET = "y0_nonzero"
VARIANT_CENTERED = "y0_zero"
_E = math.e


class BumpConstructionError(RuntimeError):
    """Moment system for the bump polynomial could not be solved."""


class AmplitudeError(ValueError):
    """Perturbed density loses positivity; a larger amplitude divisor is needed."""


class CalibrationError(ValueError):
    """Smoothness regime outside the admissible range for the variant."""


# ---------------------------------------------------------------------------
# smooth bump machinery

def _mollifier(z: np.ndarray) -> np.ndarray:
    """exp(-1/(1-z^2)) inside (-1, 1), zero outside."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    w = 1.0 - z[m] ** 2
    out[m] = np.exp(-1.0 / w)
    return out


def _mollifier_d1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    w = 1.0 - z[m] ** 2
    out[m] = np.exp(-1.0 / w) * (-2.0 * z[m] / w ** 2)
    return out


def _mollifier_d2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    w = 1.0 - z[m] ** 2
    zz = z[m]
    out[m] = np.exp(-1.0 / w) * (4.0 * zz ** 2 / w ** 4
                                 - 2.0 / w ** 2
                                 - 8.0 * zz ** 2 / w ** 3)
    return out


def _polyval(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(z, coeffs)


def _polyder(coeffs: np.ndarray, order: int = 1) -> np.ndarray:
    return np.polynomial.polynomial.polyder(coeffs, order)


@dataclass(frozen=True)
class BumpFunction:
    """Smooth compactly supported bump b(z) * p(z) with certified moments.

    ``cum0``/``cum1`` are the running integrals of h and z*h from -1,
    spline-backed on a dense grid; they drive the closed-form evaluation of
    the induced damping difference.
    """

    variant: str
    poly: np.ndarray
    moment_certificate: dict
    sup_norm: float
    _cum0: CubicSpline
    _cum1: CubicSpline

    def value(self, z) -> np.ndarray:
        return _mollifier(z) * _polyval(self.poly, np.asarray(z, dtype=float))

    def d1(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        p = _polyval(self.poly, z)
        dp = _polyval(_polyder(self.poly), z)
        return _mollifier_d1(z) * p + _mollifier(z) * dp

    def d2(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        p = _polyval(self.poly, z)
        dp = _polyval(_polyder(self.poly), z)
        ddp = _polyval(_polyder(self.poly, 2), z)
        return (_mollifier_d2(z) * p + 2.0 * _mollifier_d1(z) * dp
                + _mollifier(z) * ddp)

    def cum0(self, t) -> np.ndarray:
        """integral_{-1}^{t} h(z) dz, clipped to the support."""
        return self._cum0(np.clip(t, -1.0, 1.0))

    def cum1(self, t) -> np.ndarray:
        """integral_{-1}^{t} z h(z) dz, clipped to the support."""
        return self._cum1(np.clip(t, -1.0, 1.0))


def _gl_cumulative(fn: Callable, n_cells: int = 4000, n_gl: int = 5):
    """Cumulative integral of fn from -1 on a uniform grid, per-cell Gauss."""
    nodes, weights = leggauss(n_gl)
    edges = np.linspace(-1.0, 1.0, n_cells + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    cell = (half[:, None] * weights[None, :] * fn(pts)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    return CubicSpline(edges, cum)


def _composite_gl(fn: Callable, a: float, b: float, n_cells: int = 40,
                  n_gl: int = 20) -> float:
    """Fixed composite Gauss rule, used as the certificate's independent oracle."""
    nodes, weights = leggauss(n_gl)
    edges = np.linspace(a, b, n_cells + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    return float((half[:, None] * weights[None, :] * fn(pts)).sum())


def build_bump(variant: str) -> BumpFunction:
    """Construct the bump for the requested variant and certify its moments.

    The ansatz is the standard mollifier times an even polynomial whose
    coefficients solve the variant's moment system; evenness makes the odd
    moment conditions exact. The certificate is recomputed with a fixed
    composite Gauss rule, independent of the adaptive quadrature used to
    assemble the system.
    """
    if variant not in (VARIANT_OFFSET, VARIANT_CENTERED):
        raise ValueError(f"unknown bump variant {variant!r}")

    def moment(k: int, lo: float = -1.0, hi: float = 1.0) -> float:
        return quad(lambda z: (z ** k) * float(_mollifier(np.array([z]))[0]),
                    lo, hi, epsabs=1e-15, epsrel=1e-13, limit=400)[0]

    # Even polynomial ansatz: evenness makes the odd moment conditions and
    # h'(0) = 0 exact, leaving a linear system in the even coefficients.
    # Constraints beyond h(0) = 1: the full integral, plus (centered
    # variant) the one-sided first moment. A singular system is retried
    # with one more even degree, up to a cap.
    c0 = _E
    if variant == VARIANT_OFFSET:
        constraints = [lambda k: moment(k)]
    else:
        constraints = [lambda k: moment(k), lambda k: moment(k + 1, 0.0)]
    n_free = len(constraints)
    poly = None
    while poly is None:
        A = np.array([[con(2 * (j + 1)) for j in range(n_free)]
                      for con in constraints])
        rhs = np.array([-c0 * con(0) for con in constraints])
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e12:
            n_free += 1
            if 2 * n_free > 10:
                raise BumpConstructionError(
                    "moment system stayed singular up to the degree cap")
            continue
        if A.shape[0] == A.shape[1]:
            coeffs = np.linalg.solve(A, rhs)
        else:  # raised degree: underdetermined, take the minimum-norm fit
            coeffs = np.linalg.lstsq(A, rhs, rcond=None)[0]
        poly = np.zeros(2 * n_free + 1)
        poly[0] = c0
        poly[2::2] = coeffs

    def h(z):
        return _mollifier(z) * _polyval(poly, z)

    def zh(z):
        return z * h(z)

    cert = {
        "h_at_0": float(h(np.array([0.0]))[0]),
        "int_h": _composite_gl(h, -1.0, 1.0),
        "int_zh": _composite_gl(zh, -1.0, 1.0),
        "int_zh_right": _composite_gl(zh, 0.0, 1.0),
        "int_zh_left": _composite_gl(zh, -1.0, 0.0),
        "d1_at_0": float(_mollifier(np.array([0.0]))[0]
                         * _polyval(_polyder(poly), 0.0)),
    }
    tol = 1e-10
    ok = abs(cert["h_at_0"] - 1.0) < 1e-12 and abs(cert["int_h"]) < tol \
        and abs(cert["int_zh"]) < tol
    if variant == VARIANT_CENTERED:
        ok = ok and abs(cert["d1_at_0"]) < 1e-12 \
            and abs(cert["int_zh_right"]) < tol \
            and abs(cert["int_zh_left"]) < tol
    if not ok:
        raise BumpConstructionError(f"moment certificate failed: {cert}")

    grid = np.linspace(-1.0, 1.0, 20001)
    sup = float(np.max(np.abs(h(grid))))
    return BumpFunction(variant=variant, poly=poly, moment_certificate=cert,
                        sup_norm=sup, _cum0=_gl_cumulative(h),
                        _cum1=_gl_cumulative(zh))


# ---------------------------------------------------------------------------
# flattened potential for the centered variant

def _smoothstep_scalar(t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a / (a + b)


def _smoothstep_d1_scalar(t: float) -> float:
    if t <= 0.0 or t >= 1.0:
        return 0.0
    a = math.exp(-1.0 / t)
    b = math.exp(-1.0 / (1.0 - t))
    return a * b * (1.0 / t ** 2 + 1.0 / (1.0 - t) ** 2) / (a + b) ** 2


def flattened_quadratic(x0: float, radius: float) -> Potential:
    """Quadratic potential with V' = 0 within ``radius`` of x0.

    Equal to x^2 beyond 2*radius of x0; the blend uses a smooth switch so
    the result stays C^2 and the growth condition is untouched.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = x0 * x0

    def value(x: float) -> float:
        s = _smoothstep_scalar((abs(x - x0) - radius) / radius)
        return s * x * x + (1.0 - s) * c

    def derivative(x: float) -> float:
        t = (abs(x - x0) - radius) / radius
        s = _smoothstep_scalar(t)
        ds = _smoothstep_d1_scalar(t)
        sign = 1.0 if x >= x0 else -1.0
        return 2.0 * x * s + (x * x - c) * ds * sign / radius

    return Potential(value=value, derivative=derivative)


def _flattened_value_vec(x0: float, radius: float):
    """Vectorized V0 evaluator matching flattened_quadratic."""
    c = x0 * x0

    def v0(x):
        x = np.asarray(x, dtype=float)
        t = (np.abs(x - x0) - radius) / radius
        s = np.zeros_like(t)
        inner = (t > 0.0) & (t < 1.0)
        a = np.exp(-1.0 / np.where(inner, t, 0.5))
        b = np.exp(-1.0 / np.where(inner, 1.0 - t, 0.5))
        s[inner] = (a / (a + b))[inner]
        s[t >= 1.0] = 1.0
        return s * x * x + (1.0 - s) * c

    return v0


def flattened_gaussian_density(eta: float, x0: float, radius: float,
                               name: str = "flattened-gaussian") -> DensityModel:
    """Stationary law for the flattened potential, normalized by quadrature.

    The velocity marginal stays Gaussian; the position marginal follows the
    flattened potential, with no closed-form constant.
    """
    v0_vec = _flattened_value_vec(x0, radius)
    v0 = flattened_quadratic(x0, radius)
    half = 0.5 * eta
    xlim = math.sqrt(120.0 / eta) + abs(x0) + 2.0 * radius
    ylim = 10.0 * math.sqrt(2.0 / eta)

    zx = quad(lambda x: math.exp(-half * v0.value(x)), -xlim, xlim,
              epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    zy = 2.0 * math.sqrt(math.pi / eta)
    c = 1.0 / (zx * zy)

    def value(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = c * np.exp(-half * (0.5 * y * y + v0_vec(x)))
        return out if out.shape else float(out)

    def dx(x, y):
        vp = np.vectorize(v0.derivative)(x)
        return -half * vp * value(x, y)

    def dy(x, y):
        return -half * np.asarray(y, dtype=float) * value(x, y)

    def dyy(x, y):
        y = np.asarray(y, dtype=float)
        return (half * half * y * y - half) * value(x, y)

    # inverse-CDF table for the position marginal, exact normal in velocity
    grid = np.linspace(-xlim, xlim, 20001)
    w = np.exp(-half * v0_vec(grid))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1])
                                           * np.diff(grid))])
    cdf /= cdf[-1]
    sy = math.sqrt(2.0 / eta)

    def sampler(rng, n):
        u = rng.random(n)
        xs = np.interp(u, cdf, grid)
        ys = sy * rng.standard_normal(n)
        return xs, ys

    return DensityModel(value=value, dx=dx, dy=dy, dyy=dyy,
                        support=((-xlim, xlim), (-ylim, ylim)),
                        sampler=sampler, name=name)


# ---------------------------------------------------------------------------
# prior specification and the induced damping difference

@dataclass
class PriorSpec:
    """Base law plus a localized bump: everything needed to evaluate the
    perturbed density, its damping field, and likelihood ratios."""

    variant: str
    eta: float
    sigma: float
    x0: float
    y0: float
    h1: float
    h2: float
    m_amp: float
    bump: BumpFunction
    v0: Potential
    pi0: DensityModel
    flat_radius: Optional[float] = None
    margins: dict = field(default_factory=dict)

    @property
    def y_center(self) -> float:
        return self.y0 if self.variant == VARIANT_OFFSET else 0.0

    @property
    def rect(self) -> Tuple[float, float, float, float]:
        """Bump support rectangle (xlo, xhi, ylo, yhi)."""
        yc = self.y_center
        return (self.x0 - self.h1, self.x0 + self.h1,
                yc - self.h2, yc + self.h2)

    def bump_term(self, x, y):
        """The additive perturbation d(x, y) = h(u) h(v) / m."""
        u = (np.asarray(x, dtype=float) - self.x0) / self.h1
        v = (np.asarray(y, dtype=float) - self.y_center) / self.h2
        return self.bump.value(u) * self.bump.value(v) / self.m_amp


class PerturbationField:
    """delta = xi_tilde - xi0 for a prior, in cancellation-safe form.

    Outside the bump rectangle the value reduces to the bump's certified
    residual moments (~1e-12), not to a difference of large quadratures.
    """

    def __init__(self, spec: PriorSpec):
        self.spec = spec
        if spec.variant == VARIANT_CENTERED:
            # the potential is flat on the bump's x-shadow, so the
            # potential part of the integral vanishes identically
            if spec.flat_radius is None or spec.flat_radius < spec.h1:
                raise ValueError("centered variant needs a flat radius >= h1")
            self._v0p_vec = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        else:
            if spec.v0 is not QUADRATIC:
                raise ValueError("offset variant assumes the x^2 potential")
            self._v0p_vec = lambda x: 2.0 * np.asarray(x, dtype=float)

    def _z_moment_integral(self, y):
        """integral_0^y z h((z - yc)/h2) dz via the bump's running moments."""
        s = self.spec
        yc = s.y_center

        def antideriv(yy):
            t = (np.asarray(yy, dtype=float) - yc) / s.h2
            return s.h2 * (yc * s.bump.cum0(t) + s.h2 * s.bump.cum1(t))

        return antideriv(y) - antideriv(0.0)

    def integral_of_bump(self, x, y):
        """I[d](x, y): the stationarity integral applied to the bump term."""
        s = self.spec
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = (x - s.x0) / s.h1
        v = (y - s.y_center) / s.h2
        v_at0 = (0.0 - s.y_center) / s.h2
        hu = s.bump.value(u)
        hv = s.bump.value(v)
        s2 = s.sigma ** 2

        i1 = s.bump.d1(u) * self._z_moment_integral(y) / (s2 * s.m_amp * s.h1)

        h_at0 = float(s.bump.value(np.array([v_at0]))[0])
        dh_at0 = float(s.bump.d1(np.array([v_at0]))[0])
        i2 = -self._v0p_vec(x) * hu * (hv - h_at0) / (s.m_amp * s2)
        i3 = -2.0 * hu * (s.bump.d1(v) - dh_at0) / (s.m_amp * s.h2)
        return i1 + i2 + i3

    def delta(self, x, y):
        """Pointwise difference of the perturbed and base damping-times-y."""
        s = self.spec
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = s.bump_term(x, y)
        pit = s.pi0.value(x, y) + d
        if np.any(pit <= 0.0):
            raise PositivityError("perturbed density not positive; "
                                  "increase the amplitude divisor")
        xi0 = s.eta * y
        out = (-d * xi0 + self.integral_of_bump(x, y)) / pit
        return out if out.shape else float(out)

    def xi_tilde(self, x, y):
        return self.spec.eta * np.asarray(y, dtype=float) + self.delta(x, y)

    def dxi_dy(self, x: float, y: float, step: float = 1e-4) -> float:
        """d(y*beta_tilde)/dy by a 4th-order stencil on the quadrature route.

        Deliberately numerical: differentiating the constructed field
        algebraically would reduce the adjoint annihilation check to an
        identity. The bump's derivatives spike near the support edge, so a
        high-order stencil is needed there.
        """
        d = step * max(1.0, abs(y))
        ys = np.array([y + 2 * d, y + d, y - d, y - 2 * d])
        f = self.xi_tilde(np.full(4, float(x)), ys)
        return float((-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * d))

    def beta_tilde(self, x: float, y: float, y_switch: float = 1e-6) -> float:
        s = self.spec
        if abs(y) > y_switch:
            return s.eta + float(self.delta(x, y)) / y
        # removable singularity: explicit limit at y = 0 on pi_tilde
        pit0 = float(s.pi0.value(x, 0.0) + s.bump_term(x, 0.0))
        if pit0 <= 0:
            raise PositivityError("perturbed density not positive at y=0")
        dts = self._pi_tilde_dy(x, 0.0)
        dtss = self._pi_tilde_dyy(x, 0.0)
        s2 = s.sigma ** 2
        vp = (0.0 if s.variant == VARIANT_CENTERED and
              abs(x - s.x0) <= s.flat_radius else s.v0.derivative(x))
        return float((-vp * dts - 2.0 * s2 * dtss) / (s2 * pit0))

    def _pi_tilde_dy(self, x, y):
        s = self.spec
        u = (np.asarray(x, dtype=float) - s.x0) / s.h1
        v = (np.asarray(y, dtype=float) - s.y_center) / s.h2
        return s.pi0.dy(x, y) + s.bump.value(u) * s.bump.d1(v) / (s.m_amp * s.h2)

    def _pi_tilde_dyy(self, x, y):
        s = self.spec
        u = (np.asarray(x, dtype=float) - s.x0) / s.h1
        v = (np.asarray(y, dtype=float) - s.y_center) / s.h2
        return s.pi0.dyy(x, y) + s.bump.value(u) * s.bump.d2(v) / (s.m_amp * s.h2 ** 2)


# ---------------------------------------------------------------------------
# calibration and construction

_PRIOR_CASES = {
    (VARIANT_OFFSET, "k1_small"): lambda k1, k2: k2 / (2 * k2 + 1.0),
    (VARIANT_OFFSET, "k1_large"): lambda k1, k2: k1 / (2 * k1 + 0.5),
    (VARIANT_CENTERED, "k1_small"): lambda k1, k2: k2 / (2 * k2 + 2.0),
    (VARIANT_CENTERED, "k1_large"): lambda k1, k2: k1 / (2 * k1 + 2.0 / 3.0),
}


def calibrate_prior(k1: float, k2: float, T: float, variant: str,
                    eps: float = 0.1, eta: float = 0.5, sigma: float = 1.0,
                    x0: float = 0.0, y0: Optional[float] = None,
                    amplitude_boost: float = 1.0) -> PriorSpec:
    """Amplitude divisor and bump widths for horizon T, per regime.

    ``amplitude_boost`` scales the divisor up (widths follow); the scaling
    inequalities only tighten under it, and it keeps the perturbed density
    positive at small horizons where the bare divisor would be too small.
    Side-condition margins are evaluated numerically and reported.
    """
    if variant == VARIANT_OFFSET:
        if not max(k1, k2 / 2.0) > 0.5:
            raise CalibrationError(
                f"offset variant requires max(k1, k2/2) > 1/2, "
                f"got max({k1}, {k2 / 2.0}) = {max(k1, k2 / 2.0)}")
        if y0 is None:
            y0 = 1.5
        if y0 == 0:
            raise ValueError("offset variant needs y0 != 0")
        case = "k1_small" if k1 < k2 / 2.0 else "k1_large"
    elif variant == VARIANT_CENTERED:
        if not max(k1, k2 / 3.0) > 2.0 / 3.0:
            raise CalibrationError(
                f"centered variant requires max(k1, k2/3) > 2/3, "
                f"got max({k1}, {k2 / 3.0}) = {max(k1, k2 / 3.0)}")
        y0 = 0.0
        case = "k1_small" if k1 < k2 / 3.0 else "k1_large"
    else:
        raise ValueError(f"unknown variant {variant!r}")

    m_exp = _PRIOR_CASES[(variant, case)](k1, k2)
    m = amplitude_boost * T ** m_exp
    power = 3.0 if variant == VARIANT_CENTERED else 2.0
    if case == "k1_small":
        h2 = (eps * m) ** (-1.0 / k2)
        h1 = h2 ** power
    else:
        h1 = (eps * m) ** (-1.0 / k1)
        h2 = h1 ** (1.0 / power)

    bump = build_bump(variant)
    if variant == VARIANT_OFFSET:
        v0 = QUADRATIC
        pi0 = gaussian_density(eta)
        flat_radius = None
    else:
        flat_radius = 4.0 * h1
        v0 = flattened_quadratic(x0, flat_radius)
        pi0 = flattened_gaussian_density(eta, x0, flat_radius)

    if variant == VARIANT_OFFSET:
        smallness = (h2 / h1 + 1.0 / h2) / m
        l2_budget = T / m ** 2 * (h2 ** 3 / h1 + h1 / h2)
    else:
        smallness = (h2 / h1 + 1.0 / h2 ** 2) / m
        l2_budget = T / m ** 2 * (h2 ** 5 / h1 + h1 / h2)
    margins = {
        "case": case,
        "m_exponent": m_exp,
        "rate_exponent": 2.0 * m_exp,
        "amplitude_vs_h1": eps * h1 ** k1 * m,
        "amplitude_vs_h2": eps * h2 ** k2 * m,
        "smallness_ratio": smallness,
        "l2_budget": l2_budget,
    }

    spec = PriorSpec(variant=variant, eta=eta, sigma=sigma, x0=x0, y0=y0,
                     h1=h1, h2=h2, m_amp=m, bump=bump, v0=v0, pi0=pi0,
                     flat_radius=flat_radius, margins=margins)
    margins["positivity_margin"] = _positivity_margin(spec)
    if margins["positivity_margin"] > 0:
        margins["damping_range_screen"] = _damping_screen(spec)
    return spec


def prior_from_widths(variant: str, h2: float, k2: float = 1.0,
                      eps: float = 0.1, eta: float = 0.5, sigma: float = 1.0,
                      x0: float = 0.0, y0: Optional[float] = None) -> PriorSpec:
    """Prior with explicit slow width; the divisor saturates 1/m = eps*h2^k2.

    Used for width ladders where the scaling shape is under test and the
    horizon plays no role.
    """
    m = h2 ** (-k2) / eps
    power = 3.0 if variant == VARIANT_CENTERED else 2.0
    h1 = h2 ** power
    bump = build_bump(variant)
    if variant == VARIANT_OFFSET:
        y0 = 1.5 if y0 is None else y0
        v0 = QUADRATIC
        pi0 = gaussian_density(eta)
        flat_radius = None
    else:
        y0 = 0.0
        flat_radius = 4.0 * h1
        v0 = flattened_quadratic(x0, flat_radius)
        pi0 = flattened_gaussian_density(eta, x0, flat_radius)
    spec = PriorSpec(variant=variant, eta=eta, sigma=sigma, x0=x0, y0=y0,
                     h1=h1, h2=h2, m_amp=m, bump=bump, v0=v0, pi0=pi0,
                     flat_radius=flat_radius)
    spec.margins["positivity_margin"] = _positivity_margin(spec)
    return spec


def _damping_screen(spec: PriorSpec, resolution: int = 21) -> dict:
    """Grid screen 1/R' < beta_tilde < R' with R' = 2/eta on the bump
    rectangle (the perturbed damping equals eta everywhere else)."""
    from .stationary import screen_beta_range

    fld = PerturbationField(spec)
    r_prime = 2.0 / spec.eta
    return screen_beta_range(fld.beta_tilde, spec.rect, resolution, r_prime)


def _positivity_margin(spec: PriorSpec, resolution: int = 201) -> float:
    """min pi_tilde / max |bump term| over the bump rectangle."""
    xlo, xhi, ylo, yhi = spec.rect
    xs = np.linspace(xlo, xhi, resolution)
    ys = np.linspace(ylo, yhi, resolution)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    base = spec.pi0.value(X, Y)
    d = spec.bump_term(X, Y)
    worst = float(np.min(base + d))
    scale = float(np.max(np.abs(d)))
    return worst / scale if scale > 0 else math.inf


def build_prior(spec: PriorSpec) -> Tuple[DensityModel, DampingModel]:
    """Perturbed density with analytic derivatives and its damping model.

    Raises when the bump amplitude destroys positivity of the density on a
    dense grid over the bump rectangle.
    """
    xlo, xhi, ylo, yhi = spec.rect
    xs = np.linspace(xlo, xhi, 301)
    ys = np.linspace(ylo, yhi, 301)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    if np.min(spec.pi0.value(X, Y) + spec.bump_term(X, Y)) <= 0.0:
        raise AmplitudeError(
            "perturbed density not positive on the bump rectangle; "
            "increase the amplitude divisor (larger horizon or boost)")

    s = spec
    bump = s.bump
    yc = s.y_center

    def value(x, y):
        return s.pi0.value(x, y) + s.bump_term(x, y)

    def dx(x, y):
        u = (np.asarray(x, dtype=float) - s.x0) / s.h1
        v = (np.asarray(y, dtype=float) - yc) / s.h2
        return s.pi0.dx(x, y) + bump.d1(u) * bump.value(v) / (s.m_amp * s.h1)

    def dy(x, y):
        u = (np.asarray(x, dtype=float) - s.x0) / s.h1
        v = (np.asarray(y, dtype=float) - yc) / s.h2
        return s.pi0.dy(x, y) + bump.value(u) * bump.d1(v) / (s.m_amp * s.h2)

    def dyy(x, y):
        u = (np.asarray(x, dtype=float) - s.x0) / s.h1
        v = (np.asarray(y, dtype=float) - yc) / s.h2
        return s.pi0.dyy(x, y) + bump.value(u) * bump.d2(v) / (s.m_amp * s.h2 ** 2)

    density = DensityModel(value=value, dx=dx, dy=dy, dyy=dyy,
                           support=s.pi0.support, name="perturbed-gaussian")

    fld = PerturbationField(spec)
    beta = CoefficientField(fn=lambda x, y: fld.beta_tilde(x, y),
                            dyb=lambda x, y: fld.dxi_dy(x, y))
    model = DampingModel(a=CoefficientField.const(2.0 * s.sigma), beta=beta,
                         potential=s.v0, sigma_form="two_sigma", sigma=s.sigma,
                         name="perturbed-gaussian", stationary=density)
    return density, model


# ---------------------------------------------------------------------------
# scaling-shape verification

@dataclass
class LemmaReport:
    """Ladder check of the perturbation-size envelopes.

    ``rows`` carry one entry per rung with the observed sup and L2 sizes of
    the damping difference, the scaling shapes they are measured against,
    and the implied constants. Pass criteria: implied constants spread by
    less than a factor bound, and exact coincidence outside the rectangle.
    """

    variant: str
    rows: list
    c_sup_spread: float
    c_l2_spread: float
    outside_sup: float
    passed: bool

    def to_dict(self) -> dict:
        return {"variant": self.variant, "rows": self.rows,
                "c_sup_spread": self.c_sup_spread,
                "c_l2_spread": self.c_l2_spread,
                "outside_sup": self.outside_sup, "passed": self.passed}


def _l2_on_rect(fn, rect, n_cells: int = 8, n_gl: int = 12) -> float:
    xlo, xhi, ylo, yhi = rect
    nodes, weights = leggauss(n_gl)

    def panels(lo, hi):
        edges = np.linspace(lo, hi, n_cells + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        wts = (half[:, None] * weights[None, :]).ravel()
        return pts, wts

    px, wx = panels(xlo, xhi)
    py, wy = panels(ylo, yhi)
    X, Y = np.meshgrid(px, py, indexing="ij")
    W = wx[:, None] * wy[None, :]
    return float(np.sum(W * fn(X, Y) ** 2))


def _exterior_points(spec: PriorSpec, n: int, pad: float = 1e-9,
                     seed: int = 20260810) -> Tuple[np.ndarray, np.ndarray]:
    """Sample points outside the bump rectangle, hugging it and far away."""
    xlo, xhi, ylo, yhi = spec.rect
    rng = np.random.default_rng(seed)
    xs = np.empty(n)
    ys = np.empty(n)
    for i in range(n):
        mode = i % 3
        if mode == 0:  # just outside in x
            xs[i] = xhi + pad + rng.random() * 2.0 * spec.h1 if rng.random() < 0.5 \
                else xlo - pad - rng.random() * 2.0 * spec.h1
            ys[i] = (ylo + yhi) / 2 + (rng.random() - 0.5) * (yhi - ylo)
        elif mode == 1:  # just outside in y
            xs[i] = (xlo + xhi) / 2 + (rng.random() - 0.5) * (xhi - xlo)
            ys[i] = yhi + pad + rng.random() * 2.0 * spec.h2 if rng.random() < 0.5 \
                else ylo - pad - rng.random() * 2.0 * spec.h2
        else:  # far field
            xs[i] = spec.x0 + (rng.random() - 0.5) * 6.0
            ys[i] = spec.y_center + (rng.random() - 0.5) * 6.0
            if (xlo <= xs[i] <= xhi) and (ylo <= ys[i] <= yhi):
                ys[i] = yhi + 1.0 + rng.random()
    return xs, ys


def verify_perturbation_bounds(specs: Sequence[PriorSpec],
                               grid_resolution: int = 161,
                               n_exterior: int = 200,
                               spread_bound: float = 3.0,
                               exterior_tol: float = 1e-9) -> LemmaReport:
    """Measure |xi_tilde - xi0| against its scaling envelope over a ladder.

    For each rung the sup over a fine grid on the bump rectangle and the L2
    mass are divided by the variant's envelope shape; the implied constants
    must stay within ``spread_bound`` of each other and the difference must
    vanish outside the rectangle.
    """
    if not specs:
        raise ValueError("need at least one rung")
    variant = specs[0].variant
    rows = []
    out_sup_all = 0.0
    for spec in specs:
        if spec.variant != variant:
            raise ValueError("mixed variants in one ladder")
        fld = PerturbationField(spec)
        xlo, xhi, ylo, yhi = spec.rect
        xs = np.linspace(xlo, xhi, grid_resolution)
        ys = np.linspace(ylo, yhi, grid_resolution)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        sup = float(np.max(np.abs(fld.delta(X, Y))))
        l2 = _l2_on_rect(fld.delta, spec.rect)

        if variant == VARIANT_OFFSET:
            sup_shape = (spec.h2 / spec.h1 + 1.0 / spec.h2) / spec.m_amp
            l2_shape = (spec.h2 ** 3 / spec.h1
                        + spec.h1 / spec.h2) / spec.m_amp ** 2
        else:
            sup_shape = (spec.h2 ** 2 / spec.h1 + 1.0 / spec.h2) / spec.m_amp
            l2_shape = (spec.h2 ** 5 / spec.h1
                        + spec.h1 / spec.h2) / spec.m_amp ** 2

        ex, ey = _exterior_points(spec, n_exterior)
        out_sup = float(np.max(np.abs(fld.delta(ex, ey))))
        out_sup_all = max(out_sup_all, out_sup)
        rows.append({"h1": spec.h1, "h2": spec.h2, "m_amp": spec.m_amp,
                     "sup": sup, "sup_shape": sup_shape,
                     "c_sup": sup / sup_shape,
                     "l2": l2, "l2_shape": l2_shape, "c_l2": l2 / l2_shape,
                     "outside_sup": out_sup})

    c_sups = [r["c_sup"] for r in rows]
    c_l2s = [r["c_l2"] for r in rows]
    sup_spread = max(c_sups) / min(c_sups)
    l2_spread = max(c_l2s) / min(c_l2s)
    passed = (sup_spread < spread_bound and l2_spread < spread_bound
              and out_sup_all <= exterior_tol)
    return LemmaReport(variant=variant, rows=rows, c_sup_spread=sup_spread,
                       c_l2_spread=l2_spread, outside_sup=out_sup_all,
                       passed=passed)


# ---------------------------------------------------------------------------
# likelihood ratio along base-model paths

@dataclass(frozen=True)
class GirsanovLogRatio:
    """Log likelihood ratio of the perturbed vs base path measures, with
    its quadratic-exposure and martingale components."""

    log_ratio: float
    i_t: float
    m_mart: float


def girsanov_log_ratio(path: Path, spec: PriorSpec,
                       sigma: Optional[float] = None) -> GirsanovLogRatio:
    """Evaluate the log ratio on a path simulated under the base model.

    Uses the stored Brownian increments (left-point stochastic integral):

        i_t    = (sigma^2/8) sum delta(x_i, y_i)^2 dt
        m_mart = (sigma/2)   sum delta(x_i, y_i) db_i
        log Z  = log(pi_tilde / pi0)(x_0, y_0) - m_mart - i_t
    """
    if path.db is None or len(path.db) != path.n - 1:
        raise ValueError("path carries no usable Brownian increments; "
                         "likelihood ratios need the stored noise")
    sigma = spec.sigma if sigma is None else sigma
    fld = PerturbationField(spec)
    d = np.asarray(fld.delta(path.x[:-1], path.y[:-1]))
    i_t = float(sigma ** 2 / 8.0 * np.sum(d * d) * path.dt)
    m_mart = float(sigma / 2.0 * np.dot(d, path.db))
    x0, y0 = float(path.x[0]), float(path.y[0])
    init = math.log(float(spec.pi0.value(x0, y0) + spec.bump_term(x0, y0))
                    / float(spec.pi0.value(x0, y0)))
    return GirsanovLogRatio(log_ratio=init - m_mart - i_t, i_t=i_t,
                            m_mart=m_mart)


def expected_quadratic_exposure(spec: PriorSpec, T: float,
                                n_cells: int = 8, n_gl: int = 12) -> float:
    """T * (sigma^2/8) * integral of delta^2 * pi0 (stationarity identity).

    The integrand is supported on the bump rectangle, so a tensor Gauss
    rule there captures it entirely.
    """
    fld = PerturbationField(spec)

    def fn(x, y):
        return np.asarray(fld.delta(x, y)) * np.sqrt(spec.pi0.value(x, y))

    return T * spec.sigma ** 2 / 8.0 * _l2_on_rect(fn, spec.rect,
                                                   n_cells=n_cells, n_gl=n_gl)


def base_model(spec: PriorSpec) -> DampingModel:
    """The unperturbed model: constant damping eta with the spec's potential."""
    return DampingModel(a=CoefficientField.const(2.0 * spec.sigma),
                        beta=CoefficientField.const(spec.eta),
                        potential=spec.v0, sigma_form="two_sigma",
                        sigma=spec.sigma, name="prior-base",
                        stationary=spec.pi0)


def girsanov_ensemble(spec: PriorSpec, T: float, n_rep: int, seed_base: int,
                      dt: float = 1e-3, engine: str = "auto",
                      n_jobs: int = 1) -> dict:
    """Log ratios over stationary-start base-model replications.

    Returns arrays of the per-path components plus the quadrature value of
    the expected quadratic exposure for comparison.
    """
    from .experiments import run_replications
    from .simulate import derive_seed, simulate

    model = base_model(spec)

    def one_rep(i):
        cfg = SimulationConfig(model=model, T=T, dt=dt, burn_in=0.0,
                               init=spec.pi0, seed=derive_seed(seed_base, i))
        res = girsanov_log_ratio(simulate(cfg, engine=engine,
                                          _replication=i), spec)
        return res.log_ratio, res.i_t, res.m_mart

    rows = np.array(run_replications(one_rep, n_rep, n_jobs))
    return {"log_ratio": rows[:, 0], "i_t": rows[:, 1], "m_mart": rows[:, 2],
            "expected_i_t": expected_quadratic_exposure(spec, T)}
