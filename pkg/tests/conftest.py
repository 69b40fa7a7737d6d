import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heavyband.core import BandedSymmetricMatrix
from heavyband.models import laplacian_1d
from heavyband.noise import NoiseSpec, build_noise
from heavyband.rng import make_rng

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_banded(rng, n, K, scale=1.0):
    K = min(K, n - 1)
    bands = [scale * rng.standard_normal(n - d) for d in range(K + 1)]
    return BandedSymmetricMatrix(n, K, bands)


def noisy_laplacian(N, K=1, alpha=1.0, seed=0, family="pareto"):
    spec = NoiseSpec(family, alpha, K=K)
    return laplacian_1d(N) + build_noise(N, spec, make_rng(seed, N, "test"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
