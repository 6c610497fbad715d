import numpy as np
import pytest

from dhlab import catalog
from dhlab.models import CoefficientField, DampingModel, FLAT


@pytest.fixture(scope="session")
def paper_sim():
    return catalog.get_model("paper-sim")


@pytest.fixture(scope="session")
def gaussian_eta_model():
    return catalog.get_model("gaussian-eta", eta=0.5, sigma=1.0)


@pytest.fixture()
def free_model():
    return catalog.get_model("free")


def make_model(a=1.0, beta=0.5, potential=None):
    """Custom model from constants or callables, general form."""
    a_field = CoefficientField.const(a) if np.isscalar(a) \
        else CoefficientField(fn=a)
    b_field = CoefficientField.const(beta) if np.isscalar(beta) \
        else CoefficientField(fn=beta)
    return DampingModel(a=a_field, beta=b_field,
                        potential=potential or FLAT)


def halton_points(n, lo, hi, seed=5, dims=2):
    from scipy.stats import qmc
    pts = qmc.Halton(dims, seed=seed).random(n)
    return lo + pts * (hi - lo)
