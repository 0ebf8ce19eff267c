import numpy as np
import pytest

from csodl.core import Dictionary


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_unit_dictionary(n, k, seed):
    """Random dictionary with exactly unit-norm columns."""
    g = np.random.default_rng(seed)
    atoms = g.standard_normal((n, k))
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms)


def random_orthonormal_dictionary(n, seed):
    """Square orthonormal dictionary (QR of a random matrix)."""
    g = np.random.default_rng(seed)
    q, _ = np.linalg.qr(g.standard_normal((n, n)))
    return Dictionary(q)
