import os

# Cap BLAS pools before NumPy loads anywhere; keeps timing tests honest
# and mirrors what the package itself does at import.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from dappbench.iq import IQBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(0xD09)


def random_buffer(rng, n=1536, sigma=0.3):
    """Random complex buffer comfortably inside full scale."""
    z = rng.normal(0.0, sigma, n) + 1j * rng.normal(0.0, sigma, n)
    return IQBuffer(np.clip(z.real, -1, 1) + 1j * np.clip(z.imag, -1, 1))
