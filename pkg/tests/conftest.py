import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_channels(rng, k=2, nt=4, size=()):
    size = (size,) if np.isscalar(size) else tuple(size)
    z = rng.standard_normal(size + (k, nt, 2))
    return np.sqrt(0.5) * (z[..., 0] + 1j * z[..., 1])


def random_hermitian_psd(rng, n=4):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T
