import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_expansive(rng, n: int) -> np.ndarray:
    """Random real matrix rescaled so every eigenvalue modulus is at least 1.2."""
    while True:
        M = rng.standard_normal((n, n))
        mods = np.abs(np.linalg.eigvals(M))
        if mods.min() > 1e-2 and mods.max() / mods.min() < 6:
            return M * (1.2 + rng.random()) / mods.min()


def multiscale_points(rng, n: int, size: int, decades: float = 2.0) -> np.ndarray:
    g = rng.standard_normal((size, n))
    return g * 10.0 ** rng.uniform(-decades, decades, (size, 1))
