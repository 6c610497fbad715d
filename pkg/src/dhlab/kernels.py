"""Product-kernel pointwise density estimation and bandwidth selection.

The estimator averages a rescaled product kernel along the path:

    est(x0, y0) = (1/T) * integral_0^T k((x_s - x0)/h1) k((y_s - y0)/h2)
                  / (h1 h2) ds

with the time integral discretized by the trapezoidal rule on the path grid.
Kernels are polynomials on [-1, 1] built so that moments 1..L vanish; the
bandwidth selector dispatches between four regimes depending on the target
point's velocity coordinate and the two smoothness indices, and one of the
two bandwidths may shrink much faster than the other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg

from .simulate import Path


class KernelOrderError(ValueError):
    """Requested moment order outside the supported range."""


class DegeneratePathError(ValueError):
    """Path spans zero time; no estimate is defined."""


class BandwidthCalibrationError(ValueError):
    """Fast-bandwidth exponent below the regime's lower bound."""


@dataclass(frozen=True)
class Kernel:
    """Polynomial kernel on [-1, 1] with vanishing moments up to ``order``.

    ``coeffs`` are ascending power coefficients of the polynomial part; the
    evaluator is exactly zero outside [-1, 1].
    """

    order: int
    coeffs: np.ndarray
    sup_norm: float

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        mask = np.abs(u) <= 1.0
        if np.any(mask):
            out[mask] = np.polynomial.polynomial.polyval(u[mask], self.coeffs)
        return out

    def to_json(self) -> str:
        return json.dumps({"order": self.order,
                           "coeffs": [repr(c) for c in self.coeffs],
                           "sup_norm": repr(self.sup_norm)})


def _integrate_monomials(coeffs: np.ndarray) -> float:
    """Exact integral over [-1, 1] of a polynomial in ascending coeffs."""
    total = 0.0
    for k, c in enumerate(coeffs):
        if k % 2 == 0:
            total += 2.0 * c / (k + 1)
    return total


def build_kernel(L: int) -> Kernel:
    """Kernel of moment order L as a degree-L polynomial on [-1, 1].

    Solved in the Legendre basis, where the moment conditions form a
    triangular and well-conditioned system. L = 1 reduces to the flat
    kernel 1/2 on [-1, 1] exactly.
    """
    if not (isinstance(L, (int, np.integer)) and 1 <= L <= 8):
        raise KernelOrderError(f"supported orders are 1..8, got {L!r}")

    size = L + 1
    A = np.zeros((size, size))
    for j in range(size):
        leg = np.zeros(j + 1)
        leg[j] = 1.0
        pj = npleg.leg2poly(leg)
        for l in range(size):
            shifted = np.concatenate([np.zeros(l), pj])
            A[l, j] = _integrate_monomials(shifted)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    leg_coeffs = np.linalg.solve(A, rhs)
    coeffs = npleg.leg2poly(leg_coeffs)

    poly = np.polynomial.Polynomial(coeffs)
    candidates = [-1.0, 0.0, 1.0]
    if len(coeffs) > 1:
        for r in poly.deriv().roots():
            if abs(r.imag) < 1e-12 and -1.0 <= r.real <= 1.0:
                candidates.append(float(r.real))
    sup = max(abs(poly(c)) for c in candidates)
    return Kernel(order=int(L), coeffs=np.asarray(coeffs, dtype=float),
                  sup_norm=float(sup))


@dataclass(frozen=True)
class Bandwidths:
    """Directional window widths, optionally carrying the predicted rate.

    ``mse_exponent`` is the predicted decay exponent of the mean squared
    error in the horizon T for the regime that produced these widths.
    """

    h1: float
    h2: float
    mse_exponent: Optional[float] = None
    regime: Optional[str] = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.h1) and np.isfinite(self.h2)
                and self.h1 > 0 and self.h2 > 0):
            raise ValueError("bandwidths must be finite and positive")

    def condition_warnings(self, T: float, K: float = 1.0) -> List[str]:
        """Sub-polynomial sanity checks against a horizon T (report only)."""
        notes = []
        if 1.0 / self.h1 + 1.0 / self.h2 > K * (1.0 + T ** max(K, 1.0)):
            notes.append("bandwidths decay faster than the polynomial floor")
        if T > 1 and math.sqrt(self.h1) + self.h2 > K * min(
                math.log(T) ** -1.5, 1.0):
            notes.append("sqrt(h1) + h2 exceeds the logarithmic ceiling at this T")
        return notes


_REGIMES = {
    # regime: (slow axis, slow exponent fn, fast lower bound fn, mse fn)
    "y0_nonzero_k1_small": (
        "h2", lambda k1, k2: 1.0 / (2 * k2 + 1.0),
        lambda k1, k2: k2 / (k1 * (2 * k2 + 1.0)),
        lambda k1, k2: 2 * k2 / (2 * k2 + 1.0)),
    "y0_nonzero_k1_large": (
        "h1", lambda k1, k2: 1.0 / (2 * k1 + 0.5),
        lambda k1, k2: k1 / (k2 * (2 * k1 + 0.5)),
        lambda k1, k2: 2 * k1 / (2 * k1 + 0.5)),
    "y0_zero_k1_small": (
        "h2", lambda k1, k2: 1.0 / (2 * k2 + 2.0),
        lambda k1, k2: k2 / (k1 * (2 * k2 + 2.0)),
        lambda k1, k2: 2 * k2 / (2 * k2 + 2.0)),
    "y0_zero_k1_large": (
        "h1", lambda k1, k2: 1.0 / (2 * k1 + 2.0 / 3.0),
        lambda k1, k2: k1 / (k2 * (2 * k1 + 2.0 / 3.0)),
        lambda k1, k2: 2 * k1 / (2 * k1 + 2.0 / 3.0)),
}


def bandwidth_regime(k1: float, k2: float, y0_is_zero: bool) -> str:
    if y0_is_zero:
        return "y0_zero_k1_small" if k1 < k2 / 3.0 else "y0_zero_k1_large"
    return "y0_nonzero_k1_small" if k1 < k2 / 2.0 else "y0_nonzero_k1_large"


def select_bandwidths(k1: float, k2: float, y0_is_zero: bool, T: float,
                      c_fast: Optional[float] = None) -> Bandwidths:
    """Rate-optimal bandwidths for smoothness (k1, k2) at horizon T.

    One direction gets the rate-determining width; the other shrinks with a
    free fast exponent, bounded below per regime. The default fast exponent
    is twice its lower bound.
    """
    if not (k1 > 0 and k2 > 0):
        raise ValueError("smoothness indices must be positive")
    if not T > 1:
        raise ValueError("need T > 1")

    regime = bandwidth_regime(k1, k2, y0_is_zero)
    slow_axis, slow_exp_fn, fast_bound_fn, mse_fn = _REGIMES[regime]
    fast_bound = fast_bound_fn(k1, k2)
    if c_fast is None:
        c_fast = 2.0 * fast_bound
    if c_fast < fast_bound - 1e-12:
        raise BandwidthCalibrationError(
            f"fast exponent {c_fast} below lower bound {fast_bound} "
            f"for regime {regime}")

    slow_exp = slow_exp_fn(k1, k2)
    if regime == "y0_zero_k1_small":
        slow = (T / math.log(T)) ** (-slow_exp)
    else:
        slow = T ** (-slow_exp)
    fast = T ** (-c_fast)

    h1, h2 = (slow, fast) if slow_axis == "h1" else (fast, slow)
    return Bandwidths(h1=h1, h2=h2, mse_exponent=mse_fn(k1, k2), regime=regime)


@dataclass(frozen=True)
class PointEstimate:
    """Estimated density value at one point, with its provenance."""

    value: float
    point: tuple
    bandwidths: Bandwidths
    T: float
    n_samples: int


def estimate_point(path: Path, x0: float, y0: float, bw: Bandwidths,
                   kernel: Kernel) -> PointEstimate:
    """Trapezoid-weighted kernel average along the path."""
    if path.n < 2:
        raise DegeneratePathError("need at least two samples")
    T = path.span
    if T <= 0:
        raise DegeneratePathError("path spans zero time")

    u = (path.x - x0) / bw.h1
    v = (path.y - y0) / bw.h2
    vals = kernel(u) * kernel(v)
    w = np.full(path.n, path.dt)
    w[0] = 0.5 * path.dt
    w[-1] = 0.5 * path.dt
    value = float(np.dot(w, vals) / (bw.h1 * bw.h2 * T))
    return PointEstimate(value=value, point=(x0, y0), bandwidths=bw,
                         T=T, n_samples=path.n)


def estimate_grid(path: Path, xs: Sequence[float], ys: Sequence[float],
                  bw: Bandwidths, kernel: Kernel) -> List[PointEstimate]:
    """Convenience loop over a rectangular grid of target points."""
    return [estimate_point(path, float(x0), float(y0), bw, kernel)
            for x0 in xs for y0 in ys]


def smoothed_density_value(density, x0: float, y0: float, bw: Bandwidths,
                           kernel: Kernel) -> float:
    """Expectation of the estimator under a known density (quadrature).

    This is the kernel-smoothed density at (x0, y0); it is the bias-aware
    oracle for ensemble means of the estimator. Integration splits at the
    origin so the flat order-1 kernel is handled exactly.
    """
    from scipy.integrate import fixed_quad

    halves = ((-1.0, 0.0), (0.0, 1.0))

    def slice_at(u: float) -> float:
        def g(v):
            return kernel(v) * density.value(x0 + u * bw.h1,
                                             y0 + v * bw.h2)
        return sum(fixed_quad(g, a, b, n=60)[0] for a, b in halves)

    def outer(us):
        us = np.atleast_1d(us)
        return kernel(us) * np.array([slice_at(float(u)) for u in us])

    return float(sum(fixed_quad(outer, a, b, n=60)[0] for a, b in halves))
