"""Data distribution across machines and greedy support-set selection."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Points
from .kernels import sqexp_matrix


@dataclass(frozen=True, eq=False)
class Partition:
    """Index-level assignment of training and query points to machines.

    Blocks are disjoint and cover the inputs; training block sizes
    differ by at most one.
    """

    train_idx: tuple
    query_idx: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "train_idx",
            tuple(np.asarray(ix, dtype=np.intp) for ix in self.train_idx),
        )
        object.__setattr__(
            self,
            "query_idx",
            tuple(np.asarray(ix, dtype=np.intp) for ix in self.query_idx),
        )

    @property
    def machines(self):
        return len(self.train_idx)

    def train_blocks(self, train):
        return [train.take(ix) for ix in self.train_idx]

    def query_blocks(self, query):
        return [query.take(ix) for ix in self.query_idx]


def round_robin_origin(n, machines):
    """Block index each position is assigned to by the even scheme."""
    return np.arange(n) % machines


def _check_sizes(train, machines):
    if machines < 1:
        raise ValueError("need at least one machine")
    if train.n < machines:
        raise ValueError(
            f"cannot split {train.n} training points across {machines} machines"
        )


def partition_even(train, query, machines):
    """Round-robin split by index order; block sizes differ by at most 1."""
    _check_sizes(train, machines)
    nq = len(query)
    return Partition(
        tuple(np.arange(m, train.n, machines) for m in range(machines)),
        tuple(np.arange(m, nq, machines) for m in range(machines)),
    )


def _assign_capped(coords, centers, caps):
    """Greedy nearest-center assignment under per-center capacity caps.

    Points are processed in order of increasing distance to their
    nearest center (ties by index), so when a center fills up it is the
    farthest points that overflow to the next-nearest center with room.
    """
    n = coords.shape[0]
    machines = centers.shape[0]
    out = [[] for _ in range(machines)]
    if n == 0:
        return [np.empty(0, dtype=np.intp) for _ in range(machines)]
    d2 = np.zeros((n, machines))
    for k in range(coords.shape[1]):
        d2 += (coords[:, k, None] - centers[None, :, k]) ** 2
    order = np.lexsort((np.arange(n), d2.min(axis=1)))
    counts = np.zeros(machines, dtype=np.intp)
    for i in order:
        for c in np.argsort(d2[i], kind="stable"):
            if counts[c] < caps[c]:
                out[c].append(i)
                counts[c] += 1
                break
    return [np.sort(np.asarray(ix, dtype=np.intp)) for ix in out]


def partition_clustered(train, query, machines, seed):
    """One random center per even block, then capped nearest-center assignment.

    Training and query points are clustered against the same centers so
    that each machine's query slice is highly correlated with its data.
    Deterministic given (train, query, machines, seed).
    """
    _check_sizes(train, machines)
    base = partition_even(train, query, machines)
    rng = np.random.default_rng(seed)
    centers = np.stack(
        [train.x.coords[ix[rng.integers(len(ix))]] for ix in base.train_idx]
    )
    cap_d = -(-train.n // machines)
    cap_u = -(-len(query) // machines)
    return Partition(
        tuple(_assign_capped(train.x.coords, centers, [cap_d] * machines)),
        tuple(_assign_capped(query.coords, centers, [cap_u] * machines)),
    )


def support_candidates(train, pool_size, seed):
    """Seeded uniform subsample of the training inputs, original ids kept."""
    pool = min(pool_size, train.n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(train.n, size=pool, replace=False))
    return train.x.take(idx)


def select_support_set(candidates, k, h):
    """Greedy selection of k support points by largest posterior variance.

    Each iteration scores every remaining candidate by its predictive
    variance given the points selected so far and takes the argmax
    (ties to the lowest candidate index).  The returned points carry
    fresh negative ids so they never alias data points.
    """
    _, first = np.unique(candidates.ids, return_index=True)
    if len(first) != len(candidates):
        candidates = candidates.take(np.sort(first))
    n = len(candidates)
    if k < 1 or k > n:
        raise ValueError(f"cannot select {k} support points from {n} candidates")

    coords = candidates.coords
    prior = h.prior_variance
    variances = np.full(n, prior)
    lower = np.zeros((k, k))
    proj = np.zeros((k, n))
    chosen = []
    var_floor = 1e-12 * max(prior, np.finfo(np.float64).tiny)
    for it in range(k):
        j = int(np.argmax(variances))
        # greedy optimality: nothing unselected can beat the pick
        assert variances[j] >= np.max(variances) - 1e-12
        chosen.append(j)
        if it > 0:
            kvec = sqexp_matrix(coords[chosen[:-1]], coords[j : j + 1], h)[:, 0]
            lrow = scipy.linalg.solve_triangular(
                lower[:it, :it], kvec, lower=True, check_finite=False
            )
        else:
            lrow = np.zeros(0)
        diag = prior - float(lrow @ lrow)
        diag = max(diag, var_floor)
        lower[it, :it] = lrow
        lower[it, it] = np.sqrt(diag)
        krow = sqexp_matrix(coords[j : j + 1], coords, h)[0]
        proj[it] = (krow - lrow @ proj[:it]) / lower[it, it]
        variances = variances - proj[it] ** 2
        variances[j] = -np.inf
    sel = np.asarray(chosen, dtype=np.intp)
    return Points(coords[sel], -1 - np.arange(k))
