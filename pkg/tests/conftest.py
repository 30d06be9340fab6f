import numpy as np
import pytest

from config.settings import SEED_ENV_VAR
from data.primitives import flat_patch, icosphere, tetrahedron
from geometry.frames import build_geometry


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


@pytest.fixture(scope="session")
def sphere():
    return icosphere(1)


@pytest.fixture(scope="session")
def sphere_geometry(sphere):
    return build_geometry(sphere)


@pytest.fixture(scope="session")
def patch():
    return flat_patch(2)


@pytest.fixture(scope="session")
def tet():
    return tetrahedron()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def angle_gap(a, b):
    """Distance between angles on the circle."""
    d = np.mod(np.asarray(a) - np.asarray(b), 2.0 * np.pi)
    return np.minimum(d, 2.0 * np.pi - d)
