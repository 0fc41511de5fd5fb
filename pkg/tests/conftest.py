import numpy as np
import pytest

from polarfock import sampling


@pytest.fixture
def rng():
    return sampling.rng_from_seed(20260810)


def cofactor_det(m: np.ndarray) -> complex:
    """Brute-force Laplace expansion, oracle for determinants."""
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if n == 1:
        return complex(m[0, 0])
    total = 0.0 + 0.0j
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * cofactor_det(minor)
    return total
