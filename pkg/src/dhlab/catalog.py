"""Named model and density catalog used by the CLI and the experiment
harnesses.

"paper-sim" is the standard benchmark configuration (unit diffusion,
constant damping 0.5, quadratic potential x^2/2); its stationary law is the
standard bivariate normal. "gaussian-eta" is the two-sigma family with
constant damping eta and potential x^2. "free" is the degenerate
noise-free, force-free model, useful for exact trajectory checks.
"""

from __future__ import annotations

import math

import numpy as np

from .models import (CoefficientField, DampingModel, FLAT, QUADRATIC_HALF,
                     a_one, beta_half, zero_fn)
from .stationary import DensityModel, gaussian_density, gaussian_model


def _std_normal_density() -> DensityModel:
    c = 1.0 / (2.0 * math.pi)

    def value(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = c * np.exp(-0.5 * (x * x + y * y))
        return out if out.shape else float(out)

    def dx(x, y):
        return -np.asarray(x, dtype=float) * value(x, y)

    def dy(x, y):
        return -np.asarray(y, dtype=float) * value(x, y)

    def dyy(x, y):
        y = np.asarray(y, dtype=float)
        return (y * y - 1.0) * value(x, y)

    def sampler(rng, n):
        return rng.standard_normal(n), rng.standard_normal(n)

    return DensityModel(value=value, dx=dx, dy=dy, dyy=dyy,
                        support=((-12.0, 12.0), (-12.0, 12.0)),
                        sampler=sampler, name="paper-sim-stationary")


def get_model(name: str, **params) -> DampingModel:
    """Build a catalog model by name; unknown keys are rejected."""
    if name == "paper-sim":
        _reject_extra(params, set())
        return DampingModel(a=CoefficientField(fn=a_one, bounds=(1.0, 1.0),
                                               constant=1.0),
                            beta=CoefficientField(fn=beta_half,
                                                  bounds=(0.5, 0.5),
                                                  constant=0.5),
                            potential=QUADRATIC_HALF, name="paper-sim",
                            stationary=_std_normal_density())
    if name == "gaussian-eta":
        _reject_extra(params, {"eta", "sigma"})
        eta = float(params.get("eta", 0.5))
        sigma = float(params.get("sigma", 1.0))
        _, model = gaussian_model(eta, sigma)
        return model
    if name == "free":
        _reject_extra(params, set())
        return DampingModel(a=CoefficientField(fn=zero_fn, constant=0.0),
                            beta=CoefficientField(fn=zero_fn, constant=0.0),
                            potential=FLAT, name="free")
    raise KeyError(f"unknown model {name!r}; available: {model_names()}")


def get_density(name: str, **params) -> DensityModel:
    if name == "gaussian-eta":
        _reject_extra(params, {"eta"})
        return gaussian_density(float(params.get("eta", 0.5)))
    if name == "paper-sim":
        _reject_extra(params, set())
        return _std_normal_density()
    raise KeyError(f"unknown density {name!r}; available: {density_names()}")


def model_names():
    return ["paper-sim", "gaussian-eta", "free"]


def density_names():
    return ["gaussian-eta", "paper-sim"]


def _reject_extra(params, allowed):
    extra = set(params) - allowed
    if extra:
        raise KeyError(f"unknown parameters {sorted(extra)}; "
                       f"allowed: {sorted(allowed)}")
