import math
import warnings

import numpy as np
import pytest

from kamtorus import FrequencyVector, estimate_constants

warnings.filterwarnings(
    "ignore", message="Diophantine constants estimated over a finite range")


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _plastic() -> float:
    # real root of x^3 = x + 1
    x = 1.3
    for _ in range(64):
        x = x - (x ** 3 - x - 1.0) / (3.0 * x ** 2 - 1.0)
    return x


PLASTIC = _plastic()


@pytest.fixture(scope="session")
def golden_freq() -> FrequencyVector:
    gamma, gamma_bar = estimate_constants(np.array([GOLDEN]), 0.0, 4096, 4096)
    return FrequencyVector(n=2, alpha_tilde=np.array([GOLDEN]), tau=0.0,
                           gamma=gamma, gamma_bar=gamma_bar)


@pytest.fixture(scope="session")
def plastic_freq() -> FrequencyVector:
    at = np.array([1.0 / PLASTIC, 1.0 / PLASTIC ** 2])
    gamma, gamma_bar = estimate_constants(at, 0.1, 200, 4096)
    return FrequencyVector(n=3, alpha_tilde=at, tau=0.1, gamma=gamma,
                           gamma_bar=gamma_bar)
