import numpy as np
import pytest
from hypothesis import settings

from attractor_lab.gelfand import Kind, Mesh1D, TripleSpec, dirichlet_basis
from attractor_lab.noise import make_environment, power_law_eigenvalues

settings.register_profile("lab", deadline=None, max_examples=40)
settings.load_profile("lab")


@pytest.fixture(scope="session")
def mesh():
    return Mesh1D(1.0, 32)


@pytest.fixture(scope="session")
def plap3(mesh):
    return TripleSpec(Kind.PLAPLACE, 3.0, mesh)


@pytest.fixture(scope="session")
def heat(mesh):
    return TripleSpec(Kind.RDE, 2.0, mesh)


@pytest.fixture(scope="session")
def noisy_env(plap3):
    """8-mode additive noise on [-20, 4] with OU exponent 0.5."""
    return make_environment(3, -20.0, 4.0, 0.01, mu=0.5, eigenvalues=power_law_eigenvalues(8),
                            basis=dirichlet_basis(plap3, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
