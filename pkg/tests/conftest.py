import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_coeffs(rng, P, real=False, scale=1.0):
    """Random coefficient vector of length 2P + 1, optionally conjugate-symmetric."""
    coeffs = scale * (rng.standard_normal(2 * P + 1) + 1j * rng.standard_normal(2 * P + 1))
    if real:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    return coeffs
