import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stomsfem.mesh import Domain2D, GridSpec, build_meshes

settings.register_profile("stomsfem", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("stomsfem")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_domain():
    return Domain2D((0.0, 1.0), (0.0, 1.0))


def make_meshes(nx=4, ny=4, refine=4, eta=1.0, domain=None):
    return build_meshes(domain or Domain2D(), GridSpec(nx, ny, refine, eta))
