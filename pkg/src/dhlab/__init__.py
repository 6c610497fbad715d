"""Simulation and estimation laboratory for 2-D damped Hamiltonian SDEs:
path simulation, anisotropic kernel density estimation of the stationary
law, the density-to-damping inverse map, and localized-perturbation priors
with likelihood ratios."""

__version__ = "0.1.0"

from .models import (AssumptionReport, CoefficientField, DampingModel,
                     EvaluationError, Potential, drift, validate_herg,
                     validate_hreg)
from .simulate import (ExplosionError, Path, SimulationConfig, derive_seed,
                       simulate, simulate_ensemble)
from .kernels import (Bandwidths, BandwidthCalibrationError, Kernel,
                      KernelOrderError, PointEstimate, build_kernel,
                      estimate_grid, estimate_point, select_bandwidths)
from .stationary import (DensityModel, GaussianStationary, PositivityError,
                         adjoint_apply, beta_from_density, gaussian_density,
                         gaussian_model, xi_from_density)
from .priors import (AmplitudeError, BumpFunction, CalibrationError,
                     GirsanovLogRatio, PerturbationField, PriorSpec,
                     build_bump, build_prior, calibrate_prior,
                     girsanov_ensemble, girsanov_log_ratio,
                     verify_perturbation_bounds)
from .experiments import (ExperimentReport, VarianceSweepConfig,
                          covariance_lag, rate_sweep, variance_sweep)
from . import catalog

__all__ = [
    "AssumptionReport", "CoefficientField", "DampingModel", "EvaluationError",
    "Potential", "drift", "validate_herg", "validate_hreg",
    "ExplosionError", "Path", "SimulationConfig", "derive_seed", "simulate",
    "simulate_ensemble",
    "Bandwidths", "BandwidthCalibrationError", "Kernel", "KernelOrderError",
    "PointEstimate", "build_kernel", "estimate_grid", "estimate_point",
    "select_bandwidths",
    "DensityModel", "GaussianStationary", "PositivityError", "adjoint_apply",
    "beta_from_density", "gaussian_density", "gaussian_model",
    "xi_from_density",
    "AmplitudeError", "BumpFunction", "CalibrationError", "GirsanovLogRatio",
    "PerturbationField", "PriorSpec", "build_bump", "build_prior",
    "calibrate_prior", "girsanov_ensemble", "girsanov_log_ratio",
    "verify_perturbation_bounds",
    "ExperimentReport", "VarianceSweepConfig", "covariance_lag", "rate_sweep",
    "variance_sweep", "catalog",
]
