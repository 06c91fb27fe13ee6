import numpy as np
import pytest

from robls.dist import NormalCore, construct_from_core_mass, reference_models

X_K = np.arange(-10.0, 11.0)


@pytest.fixture(scope="session")
def models():
    return reference_models()


@pytest.fixture(scope="session")
def lp():
    """Log-Pareto-tailed standard normal, core mass 0.95."""
    return construct_from_core_mass(NormalCore(), 0.95)


@pytest.fixture(scope="session")
def x_k():
    return X_K.copy()
