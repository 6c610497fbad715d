import math

import numpy as np
import pytest
from scipy.integrate import quad

from dhlab.kernels import (Bandwidths, BandwidthCalibrationError,
                           DegeneratePathError, KernelOrderError,
                           build_kernel, estimate_grid, estimate_point,
                           select_bandwidths, smoothed_density_value)
from dhlab.simulate import Path, SimulationConfig, derive_seed, simulate


def _flat_path(x0, y0, n=11, dt=0.1):
    return Path(t0=0.0, dt=dt, x=np.full(n, x0), y=np.full(n, y0),
                db=np.zeros(n - 1), seed=0)


class TestBuildKernel:
    def test_order_one_is_flat_half(self):
        k = build_kernel(1)
        u = np.linspace(-0.999, 0.999, 41)
        assert np.all(k(u) == 0.5)
        assert quad(lambda t: k(np.array([t]))[0], -1, 1)[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("L", range(1, 9))
    def test_moments_vanish_by_quadrature(self, L):
        # independent oracle: adaptive quadrature of u^l * kernel(u)
        k = build_kernel(L)
        for l in range(L + 1):
            val = quad(lambda u: k(np.array([u]))[0] * u ** l, -1, 1,
                       epsabs=1e-14, epsrel=1e-12)[0]
            target = 1.0 if l == 0 else 0.0
            assert abs(val - target) < 1e-10

    def test_order_two_matches_closed_form(self):
        # moment system solved by hand: 9/8 - 15/8 u^2
        k = build_kernel(2)
        assert np.allclose(k.coeffs, [9 / 8, 0.0, -15 / 8], atol=1e-12)

    def test_compact_support(self):
        for L in (1, 3, 5):
            k = build_kernel(L)
            assert np.all(k(np.array([1.5, -1.2, 7.0])) == 0.0)

    @pytest.mark.parametrize("L", [0, 9, -1])
    def test_unsupported_order(self, L):
        with pytest.raises(KernelOrderError):
            build_kernel(L)

    def test_sup_norm_bounds_samples(self):
        for L in (2, 4, 8):
            k = build_kernel(L)
            u = np.linspace(-1, 1, 10001)
            assert np.max(np.abs(k(u))) <= k.sup_norm + 1e-12

    def test_coefficients_dump(self):
        import json
        blob = json.loads(build_kernel(2).to_json())
        assert blob["order"] == 2
        assert len(blob["coeffs"]) == 3


class TestSelectBandwidths:
    def test_velocity_offset_balanced_smoothness(self):
        bw = select_bandwidths(1.0, 1.0, y0_is_zero=False, T=1e4)
        assert bw.h1 == pytest.approx(10 ** -1.6, rel=1e-12)
        assert bw.mse_exponent == pytest.approx(0.8, abs=1e-12)
        assert bw.regime == "y0_nonzero_k1_large"

    def test_velocity_offset_smooth_in_velocity(self):
        bw = select_bandwidths(1.0, 4.0, y0_is_zero=False, T=1e4)
        assert bw.h2 == pytest.approx(10 ** (-4.0 / 9.0), rel=1e-12)
        assert bw.mse_exponent == pytest.approx(8.0 / 9.0, abs=1e-12)

    def test_velocity_zero_balanced(self):
        bw = select_bandwidths(1.0, 1.0, y0_is_zero=True, T=1e4)
        assert bw.h1 == pytest.approx(10 ** -1.5, rel=1e-12)
        assert bw.mse_exponent == pytest.approx(0.75, abs=1e-12)

    def test_velocity_zero_log_corrected_slow_width(self):
        T = 1e4
        bw = select_bandwidths(0.5, 2.0, y0_is_zero=True, T=T)
        assert bw.h2 == pytest.approx((T / math.log(T)) ** (-1.0 / 6.0),
                                      rel=1e-12)

    def test_fast_exponent_floor_enforced(self):
        with pytest.raises(BandwidthCalibrationError, match="0.4"):
            select_bandwidths(1.0, 1.0, y0_is_zero=False, T=1e4, c_fast=0.1)

    def test_fast_exponent_free_above_floor(self):
        bw = select_bandwidths(1.0, 1.0, y0_is_zero=False, T=100.0,
                               c_fast=3.0)
        assert bw.h2 == pytest.approx(100.0 ** -3.0)

    def test_regime_boundary_exponent_continuity(self):
        # at k1 = k2/2 both branches predict the same error exponent
        k2 = 2.0
        k1 = k2 / 2.0
        below = select_bandwidths(k1 - 1e-13, k2, False, T=1e4)
        above = select_bandwidths(k1, k2, False, T=1e4)
        assert abs(below.mse_exponent - above.mse_exponent) < 1e-12
        assert abs(1.0 / (2 * k1 + 0.5) - 1.0 / (k2 + 0.5)) < 1e-12

    def test_condition_warnings_fire_on_large_widths(self):
        notes = Bandwidths(h1=0.9, h2=0.9).condition_warnings(T=1e6)
        assert any("logarithmic" in n for n in notes)

    def test_validation(self):
        with pytest.raises(ValueError):
            Bandwidths(h1=-0.1, h2=0.1)
        with pytest.raises(ValueError):
            select_bandwidths(0.0, 1.0, False, T=100.0)
        with pytest.raises(ValueError):
            select_bandwidths(1.0, 1.0, False, T=0.5)


class TestEstimatePoint:
    def test_constant_path_closed_form(self):
        k = build_kernel(1)
        for h1, h2 in [(0.2, 0.4), (1.0, 1.0)]:
            est = estimate_point(_flat_path(0.7, -1.1), 0.7, -1.1,
                                 Bandwidths(h1=h1, h2=h2), k)
            assert est.value == pytest.approx(1.0 / (4 * h1 * h2), rel=1e-14)

    def test_path_outside_window_gives_zero(self):
        k = build_kernel(1)
        est = estimate_point(_flat_path(5.0, 5.0), 0.0, 0.0,
                             Bandwidths(h1=0.5, h2=0.5), k)
        assert est.value == 0.0

    def test_degenerate_path_rejected(self):
        k = build_kernel(1)
        with pytest.raises(DegeneratePathError):
            estimate_point(Path(0.0, 0.1, np.array([0.0]), np.array([0.0]),
                                None, 0), 0.0, 0.0, Bandwidths(0.1, 0.1), k)

    def test_concatenation_linearity(self):
        # trapezoid splits exactly: estimate on glued halves equals the mean
        rng = np.random.default_rng(3)
        n = 501
        x = rng.normal(0, 1, 2 * n - 1)
        y = rng.normal(0, 1, 2 * n - 1)
        full = Path(0.0, 0.01, x, y, None, 0)
        left = Path(0.0, 0.01, x[:n], y[:n], None, 0)
        right = Path(0.0, 0.01, x[n - 1:], y[n - 1:], None, 0)
        k = build_kernel(2)
        bw = Bandwidths(h1=0.6, h2=0.6)
        v = estimate_point(full, 0.1, -0.2, bw, k).value
        vl = estimate_point(left, 0.1, -0.2, bw, k).value
        vr = estimate_point(right, 0.1, -0.2, bw, k).value
        assert abs(v - 0.5 * (vl + vr)) < 1e-12

    def test_signed_kernel_bound(self):
        rng = np.random.default_rng(8)
        path = Path(0.0, 0.01, rng.normal(0, 0.2, 400),
                    rng.normal(0, 0.2, 400), None, 0)
        k = build_kernel(4)
        bw = Bandwidths(h1=0.15, h2=0.2)
        est = estimate_point(path, 0.0, 0.0, bw, k)
        assert abs(est.value) <= k.sup_norm ** 2 / (bw.h1 * bw.h2) + 1e-12

    def test_rescaled_kernel_integrates_to_one(self):
        # each direction contributes (1/h) int k((t - t0)/h) dt = 1
        k = build_kernel(2)
        for h, t0 in [(0.37, 0.2), (2.5, -1.0)]:
            val = quad(lambda t: k(np.array([(t - t0) / h]))[0] / h,
                       t0 - h, t0 + h, epsabs=1e-12)[0]
            assert abs(val - 1.0) < 1e-8

    def test_grid_convenience(self):
        k = build_kernel(1)
        ests = estimate_grid(_flat_path(0.0, 0.0), [-0.1, 0.0], [0.0, 0.1],
                             Bandwidths(0.5, 0.5), k)
        assert len(ests) == 4
        assert all(e.n_samples == 11 for e in ests)


@pytest.mark.slow
class TestEnsembleMeanAgainstSmoothedOracle:
    def test_paper_sim_point_estimate(self, paper_sim):
        # oracle: quadrature of the kernel-smoothed stationary density
        k = build_kernel(1)
        bw = Bandwidths(h1=0.3, h2=0.3)
        truth = paper_sim.stationary.value(0.0, 1.5)
        smoothed = smoothed_density_value(paper_sim.stationary, 0.0, 1.5,
                                          bw, k)
        assert abs(smoothed - truth) < 5e-4

        vals = []
        for i in range(150):
            cfg = SimulationConfig(model=paper_sim, T=200.0, dt=1e-3,
                                   burn_in=50.0, seed=derive_seed(914, i))
            vals.append(estimate_point(simulate(cfg), 0.0, 1.5, bw, k).value)
        vals = np.array(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - smoothed) < 3 * se
        assert abs(vals.mean() - truth) < 3 * se + 5e-4
