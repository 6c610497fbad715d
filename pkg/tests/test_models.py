import math

import numpy as np
import pytest

from dhlab.models import (CoefficientField, DampingModel, EvaluationError,
                          FLAT, Potential, QUADRATIC, QUADRATIC_HALF, drift,
                          validate_herg, validate_hreg)
from conftest import make_model


class TestDrift:
    def test_hand_evaluation_general_form(self, paper_sim):
        # beta = 0.5, V = x^2/2 at (1, 2): dy = -(0.5*2 + 1)
        assert drift(paper_sim, 1.0, 2.0) == (2.0, -2.0)

    def test_equilibrium_point(self, free_model):
        assert drift(free_model, 3.0, 0.0) == (0.0, 0.0)

    def test_two_sigma_form(self):
        eta = 0.7
        model = DampingModel(a=CoefficientField.const(2.0),
                            beta=CoefficientField.const(eta),
                            potential=QUADRATIC, sigma_form="two_sigma",
                            sigma=1.0)
        dx, dy = drift(model, 1.0, 1.0)
        assert dx == 1.0
        assert dy == pytest.approx(-(eta + 2.0), abs=1e-15)

    def test_position_component_is_velocity(self, paper_sim, free_model):
        for model in (paper_sim, free_model):
            for x, y in [(-2.0, 0.3), (0.0, -5.0), (1.5, 2.5)]:
                assert drift(model, x, y)[0] == y

    def test_non_finite_drift_raises(self):
        bad = make_model(beta=lambda x, y: math.nan)
        with pytest.raises(EvaluationError):
            drift(bad, 0.0, 1.0)

    def test_two_sigma_requires_matching_diffusion(self):
        with pytest.raises(ValueError):
            DampingModel(a=CoefficientField.const(1.0),
                         beta=CoefficientField.const(0.5),
                         potential=QUADRATIC, sigma_form="two_sigma",
                         sigma=1.0)


class TestValidateHReg:
    def test_paper_sim_clean(self, paper_sim):
        rep = validate_hreg(paper_sim, rect=(-5, 5, -5, 5))
        assert rep.ok
        assert rep.stats["a_min"] == 1.0
        assert rep.stats["beta_abs_max"] == 0.5

    def test_degenerate_diffusion_flagged(self):
        rep = validate_hreg(make_model(a=0.0))
        assert "a not bounded below by positive constant" in rep.violations

    def test_oscillating_diffusion_extrema(self):
        model = make_model(a=lambda x, y: 1.0 + 0.5 * math.sin(x))
        rep = validate_hreg(model, rect=(-5, 5, -5, 5), resolution=101)
        assert rep.ok
        assert rep.stats["a_min"] == pytest.approx(0.5, abs=1e-3)
        assert rep.stats["a_max"] == pytest.approx(1.5, abs=1e-3)

    def test_damping_floor_for_large_x(self):
        rep = validate_hreg(make_model(beta=0.05), l=0.0, beta_lower=0.1)
        assert not rep.ok
        rep2 = validate_hreg(make_model(beta=0.5), l=0.0, beta_lower=0.1)
        assert rep2.ok

    def test_non_finite_coefficient_names_point(self):
        model = make_model(a=lambda x, y: 1.0 / x if x != 0 else math.inf)
        with pytest.raises(EvaluationError, match="grid point"):
            validate_hreg(model, rect=(-5, 5, -5, 5), resolution=11)

    def test_empty_grid_rejected(self, paper_sim):
        with pytest.raises(ValueError):
            validate_hreg(paper_sim, rect=(1, 1, -5, 5))


class TestValidateHErg:
    def test_quadratic_growth(self):
        rep = validate_herg(QUADRATIC_HALF, probe_radius=100.0)
        assert rep.ok
        assert rep.stats["trend"] == "increasing"
        assert rep.stats["pos_signed"][-1] == pytest.approx(100.0)
        assert rep.stats["neg_signed"][-1] == pytest.approx(100.0)

    def test_constant_potential_unsupported(self):
        rep = validate_herg(FLAT, probe_radius=10.0)
        assert not rep.ok
        assert any("not supported" in v for v in rep.violations)

    def test_quartic_growth(self):
        quartic = Potential(value=lambda x: 0.25 * x ** 4,
                            derivative=lambda x: x ** 3)
        rep = validate_herg(quartic, probe_radius=10.0)
        assert rep.stats["trend"] == "increasing"
        assert rep.stats["pos_signed"][-1] == pytest.approx(1000.0)

    def test_always_reports_inconclusive_limit(self):
        rep = validate_herg(QUADRATIC, probe_radius=5.0)
        assert any("asymptotic" in note for note in rep.inconclusive)

    def test_non_monotone_flagged(self):
        wobble = Potential(value=lambda x: x ** 2 + 10 * math.sin(x),
                           derivative=lambda x: 2 * x + 10 * math.cos(x))
        rep = validate_herg(wobble, probe_radius=20.0)
        assert rep.stats["trend"] in ("non-monotone", "decreasing")
        assert len(rep.inconclusive) >= 1


class TestPotential:
    @pytest.mark.parametrize("pot", [QUADRATIC, QUADRATIC_HALF,
                                     Potential(lambda x: x ** 4 / 4 - x ** 2,
                                               lambda x: x ** 3 - 2 * x)])
    def test_finite_difference_consistency(self, pot):
        grid = np.linspace(-3, 3, 25)
        assert pot.check_derivative(grid, delta=1e-5, tol=1e-6)

    def test_inconsistent_pair_detected(self):
        wrong = Potential(value=lambda x: x ** 2,
                          derivative=lambda x: 3.0 * x)
        assert not wrong.check_derivative(np.linspace(-2, 2, 9))


class TestCoefficientField:
    def test_constant_helper(self):
        f = CoefficientField.const(2.5)
        assert f(0.0, 0.0) == 2.5
        assert f.constant == 2.5
        assert f.dy(1.0, 1.0) == 0.0

    def test_declared_bounds_checked(self):
        f = CoefficientField(fn=lambda x, y: math.sin(x), bounds=(-0.5, 0.5))
        assert not f.check_bounds(np.linspace(-3, 3, 21), np.array([0.0]))
        g = CoefficientField(fn=lambda x, y: math.sin(x), bounds=(-1.0, 1.0))
        assert g.check_bounds(np.linspace(-3, 3, 21), np.array([0.0]))
