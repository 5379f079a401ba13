import numpy as np
import pytest

from pqsmag import qmat


def random_matrix(rng, hermitian=False, psd=False):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    if psd:
        return a @ qmat.dag(a)
    if hermitian:
        return a + qmat.dag(a)
    return a


def random_density(rng):
    r = random_matrix(rng, psd=True)
    return r / np.trace(r).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
