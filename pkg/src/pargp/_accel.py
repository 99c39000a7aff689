"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

Set ``PARGP_NO_NUMBA=1`` to force the numpy path (it is also used
automatically when numba is not importable).  Both paths perform the
same floating-point operations in the same order per output element,
so within either path the results do not depend on how the inputs are
sliced across workers.  In particular the incomplete-Cholesky row
update deliberately avoids BLAS gemv, whose summation order changes
with the operand width.  Across the two paths only the final exp can
differ, by at most one ulp (libm vs numpy's vectorized exp).

``benchmarks/bench_accel.py`` compares the two paths.
"""

import os

import numpy as np


def _scaled_sqdist_numpy(a, b, inv_ls):
    out = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        t = (a[:, k, None] - b[None, :, k]) * inv_ls[k]
        out += t * t
    return out


def _sqexp_gram_numpy(a, b, inv_ls, sig_var):
    return sig_var * np.exp(-0.5 * _scaled_sqdist_numpy(a, b, inv_ls))


def _sqexp_row_numpy(p, pts, inv_ls, sig_var):
    acc = np.zeros(pts.shape[0])
    for k in range(pts.shape[1]):
        t = (p[k] - pts[:, k]) * inv_ls[k]
        acc += t * t
    return sig_var * np.exp(-0.5 * acc)


def _residual_row_numpy(f_prefix, fcol, krow, piv):
    # ascending-s accumulation; must match the jitted loop bit-for-bit
    acc = krow.copy()
    for s in range(f_prefix.shape[0]):
        acc -= fcol[s] * f_prefix[s]
    return acc / piv


def _scaled_sqdist_loops(a, b, inv_ls):
    n, m, d = a.shape[0], b.shape[0], a.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                t = (a[i, k] - b[j, k]) * inv_ls[k]
                acc += t * t
            out[i, j] = acc
    return out


def _sqexp_row_loops(p, pts, inv_ls, sig_var):
    n, d = pts.shape[0], pts.shape[1]
    out = np.empty(n)
    for j in range(n):
        acc = 0.0
        for k in range(d):
            t = (p[k] - pts[j, k]) * inv_ls[k]
            acc += t * t
        out[j] = sig_var * np.exp(-0.5 * acc)
    return out


def _residual_row_loops(f_prefix, fcol, krow, piv):
    r, w = f_prefix.shape[0], f_prefix.shape[1]
    out = np.empty(w)
    for j in range(w):
        acc = krow[j]
        for s in range(r):
            acc -= fcol[s] * f_prefix[s, j]
        out[j] = acc / piv
    return out


def _sqexp_gram_loops(a, b, inv_ls, sig_var):
    n, m, d = a.shape[0], b.shape[0], a.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                t = (a[i, k] - b[j, k]) * inv_ls[k]
                acc += t * t
            out[i, j] = sig_var * np.exp(-0.5 * acc)
    return out


NUMPY_IMPL = {
    "scaled_sqdist": _scaled_sqdist_numpy,
    "sqexp_gram": _sqexp_gram_numpy,
    "sqexp_row": _sqexp_row_numpy,
    "residual_row": _residual_row_numpy,
}

NUMBA_IMPL = None
NUMBA_ENABLED = False

if os.environ.get("PARGP_NO_NUMBA", "").strip() not in ("", "0"):
    _njit = None
else:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _njit = None

if _njit is not None:
    NUMBA_IMPL = {
        "scaled_sqdist": _njit(cache=True)(_scaled_sqdist_loops),
        "sqexp_gram": _njit(cache=True)(_sqexp_gram_loops),
        "sqexp_row": _njit(cache=True)(_sqexp_row_loops),
        "residual_row": _njit(cache=True)(_residual_row_loops),
    }
    NUMBA_ENABLED = True

_ACTIVE = NUMBA_IMPL if NUMBA_ENABLED else NUMPY_IMPL

scaled_sqdist = _ACTIVE["scaled_sqdist"]
sqexp_gram = _ACTIVE["sqexp_gram"]
sqexp_row = _ACTIVE["sqexp_row"]
residual_row = _ACTIVE["residual_row"]
