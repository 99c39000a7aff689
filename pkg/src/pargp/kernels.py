"""Squared-exponential covariance evaluation and matrix assembly.

The noise term is gated by point identity: two points contribute
noise_variance to their covariance iff their ids are equal.  Coordinate
coincidence alone never adds noise, which keeps a query point that
duplicates a training location distinct from it.
"""

import math

import numpy as np

from ._accel import sqexp_gram


def _check_dims(da, db, h):
    if da != db:
        raise ValueError(f"input dimensions differ: {da} vs {db}")
    if da != h.dim:
        raise ValueError(
            f"input dimension {da} does not match {h.dim} length-scales"
        )


def kernel(x, y, h):
    """Covariance between two points: sqexp(x, y) + noise if ids match."""
    _check_dims(x.dim, y.dim, h)
    acc = 0.0
    for k in range(x.dim):
        t = (x.coords[k] - y.coords[k]) / h.length_scales[k]
        acc += t * t
    val = h.signal_variance * math.exp(-0.5 * acc)
    if x.id == y.id:
        val += h.noise_variance
    return val


def sqexp_matrix(a_coords, b_coords, h):
    """Noise-free squared-exponential kernel matrix between coordinate arrays."""
    a = np.ascontiguousarray(a_coords, dtype=np.float64)
    b = np.ascontiguousarray(b_coords, dtype=np.float64)
    _check_dims(a.shape[1], b.shape[1], h)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    inv_ls = 1.0 / h.length_scales
    return sqexp_gram(a, b, inv_ls, h.signal_variance)


def cov_matrix(a, b, h):
    """Covariance matrix between two point sets, entry (i, j) = kernel(a_i, b_j)."""
    out = sqexp_matrix(a.coords, b.coords, h)
    if h.noise_variance > 0 and len(a) and len(b):
        if a is b:
            out[np.diag_indices(len(a))] += h.noise_variance
        else:
            out += h.noise_variance * (a.ids[:, None] == b.ids[None, :])
    return out


def prior_variances(pts, h):
    """Marginal prior variance at each point (signal plus noise)."""
    return np.full(len(pts), h.prior_variance)
