"""Full (exact) Gaussian process regression.

This is the cubic-time reference predictor that every approximate
method in the package is measured against.
"""

import numpy as np

from .core import Prediction
from .kernels import cov_matrix, prior_variances
from .linalg import pd_factor


def fgp_predict(train, query, h, want_full_cov=False):
    """Exact GP posterior at `query` given the training data.

    An empty training set yields the prior.  The posterior covariance
    never depends on the realized outputs, only on the input geometry.
    """
    mu = train.prior_mean
    if train.n == 0:
        if want_full_cov:
            return Prediction(np.full(len(query), mu), cov=cov_matrix(query, query, h))
        return Prediction(np.full(len(query), mu), prior_variances(query, h))

    kdd = cov_matrix(train.x, train.x, h)
    kud = cov_matrix(query, train.x, h)
    fac = pd_factor(kdd, check_symmetry=False)  # symmetric by construction
    mean = mu + kud @ fac.solve(train.residual())
    back = fac.solve(kud.T)
    if want_full_cov:
        return Prediction(mean, cov=cov_matrix(query, query, h) - kud @ back)
    var = prior_variances(query, h) - np.einsum("ij,ji->i", kud, back)
    return Prediction(mean, var)
