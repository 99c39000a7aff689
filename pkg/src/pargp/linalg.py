"""Symmetric positive-definite solves.

Every matrix inverse in the model formulas is realized as a Cholesky
factor-and-solve; explicit inverses are never formed.  Factorization
failures trigger a diagonal jitter retry policy before giving up.
"""

import numpy as np
import scipy.linalg

JITTER_SCALE = 1e-10
JITTER_ATTEMPTS = 6
SYMMETRY_RTOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix fails Cholesky even after jitter retries."""

    def __init__(self, message, attempted_jitter=0.0):
        super().__init__(message)
        self.attempted_jitter = float(attempted_jitter)


def chol_with_jitter(a):
    """Lower Cholesky factor of `a`, retrying with growing diagonal jitter.

    Returns (lower_factor, jitter_used).  The base jitter is
    JITTER_SCALE * mean(diag(a)), doubled for up to JITTER_ATTEMPTS tries.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=False), 0.0
    except scipy.linalg.LinAlgError:
        pass
    mean_diag = float(np.mean(np.diag(a)))
    if mean_diag <= 0:
        raise NotPositiveDefiniteError(
            f"matrix of order {n} is not positive definite (nonpositive diagonal)",
        )
    jitter = JITTER_SCALE * mean_diag
    eye = np.eye(n)
    for _ in range(JITTER_ATTEMPTS):
        try:
            return (
                scipy.linalg.cholesky(a + jitter * eye, lower=True, check_finite=False),
                jitter,
            )
        except scipy.linalg.LinAlgError:
            jitter *= 2.0
    raise NotPositiveDefiniteError(
        f"matrix of order {n} is not positive definite "
        f"(last attempted jitter {jitter / 2.0:.3e})",
        attempted_jitter=jitter / 2.0,
    )


class PDFactor:
    """Cached Cholesky factorization for repeated solves against one matrix."""

    def __init__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        self.n = a.shape[0]
        self._lower, self.jitter = chol_with_jitter(a)

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError(
                f"right-hand side has {b.shape[0]} rows, matrix order is {self.n}"
            )
        if self.n == 0:
            return np.zeros_like(b)
        return scipy.linalg.cho_solve((self._lower, True), b, check_finite=False)


def pd_factor(a, check_symmetry=True):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if check_symmetry and a.size:
        amax = float(np.max(np.abs(a)))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_RTOL * max(amax, np.finfo(np.float64).tiny):
            raise ValueError(
                f"matrix of order {a.shape[0]} is not symmetric "
                f"(max asymmetry {asym:.3e} vs max entry {amax:.3e})"
            )
    return PDFactor(a)


def pd_solve(a, b):
    """Solve a @ x = b for symmetric positive-definite `a`."""
    return pd_factor(a).solve(b)
