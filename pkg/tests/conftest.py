import numpy as np
import pytest

from oscillon import coefficients as co
from oscillon import dynamics as dy
from oscillon import potential as pt


@pytest.fixture(scope="session")
def phi4_spec():
    return pt.phi4()


@pytest.fixture(scope="session")
def constant_profile():
    return co.scenario("constant", W=1.0, mu0=1.0)


@pytest.fixture(scope="session")
def phi4_constants(phi4_spec):
    return pt.compute_constants(phi4_spec, W=1.0)


@pytest.fixture(scope="session")
def undamped_profile():
    """omega == 0, mu == 1: the conservative diagnostic profile (bypasses the
    positivity validation that scenario profiles enforce)."""
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    return co.CoefficientProfile(omega=zero, omega_prime=zero, mu=one,
                                 mu_prime=zero, W=0.0, label="undamped")


@pytest.fixture
def small_spec(constant_profile, phi4_spec):
    return dy.EvolutionSpec(profile=constant_profile, potential=phi4_spec,
                            dim=1, n=32)
