import os

# The matrices in this suite are small (<= 2048^2); threaded BLAS loses
# badly to spin-wait overhead on small shared hosts and adds nothing at
# these sizes.  Must be set before numpy initializes its BLAS.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from pargp.core import Dataset, Hyperparams, Points


@pytest.fixture
def h2():
    return Hyperparams(1.0, 0.1, np.array([1.5, 1.5]))


def make_instance(seed, n, n_query, d=2, h=None, prior_mean=0.0,
                  signal=1.0, noise=0.1, length=1.5):
    """Random instance with outputs drawn loosely around the prior scale."""
    if h is None:
        h = Hyperparams(signal, noise, np.full(d, float(length)))
    rng = np.random.default_rng(seed)
    train = Dataset(
        Points(rng.uniform(0, 10, (n, d)), np.arange(n)),
        prior_mean + rng.standard_normal(n),
        prior_mean,
    )
    query = Points(rng.uniform(0, 10, (n_query, d)), 100_000 + np.arange(n_query))
    return train, query, h
