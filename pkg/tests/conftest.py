import math

import pytest
from hypothesis import HealthCheck, settings

from birkhoff_lab import geom

settings.register_profile("desk", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("desk")


@pytest.fixture(scope="session")
def sphere():
    return geom.round_sphere()


@pytest.fixture(scope="session")
def torus():
    return geom.torus_of_revolution(2.0, 1.0)


@pytest.fixture(scope="session")
def flat():
    return geom.flat_torus()


@pytest.fixture(scope="session")
def dumbbell():
    return geom.dumbbell_sphere(0.5)


SURFACES = {
    "round_sphere": lambda: geom.round_sphere(),
    "spheroid": lambda: geom.spheroid(0.9),
    "dumbbell": lambda: geom.dumbbell_sphere(0.5),
    "bumped_dumbbell": lambda: geom.dumbbell_sphere(0.5, bump=0.05),
    "torus": lambda: geom.torus_of_revolution(2.0, 1.0),
    "conformal_torus": lambda: geom.conformal_torus([(1, 0, 0.05, 0.0), (0, 1, 0.0, 0.03), (1, 1, 0.02, 0.01)]),
    "flat_torus": lambda: geom.flat_torus(),
}

HALF_PI = math.pi / 2
