"""Incomplete Cholesky factorization of the noise-free kernel matrix and
the reduced-rank GP predictor built on it.

The factor targets K = full covariance minus the noise diagonal, so the
model approximates the training covariance by factor.T @ factor plus
the noise diagonal.  Pivots are chosen greedily by largest diagonal
residual with ties broken by lowest point id; that rule makes the
distributed factorization reproduce the serial one bit-for-bit.

The predictive covariance of this family is not guaranteed positive
semidefinite at low rank; variances are reported raw.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._accel import residual_row, sqexp_row
from .core import Prediction
from .kernels import cov_matrix, prior_variances
from .linalg import pd_factor

EARLY_STOP_RTOL = 1e-12
BREAKDOWN_RTOL = 1e-9


class IcfBreakdownError(np.linalg.LinAlgError):
    """Raised when a diagonal residual turns negative beyond tolerance."""


@dataclass(frozen=True, eq=False)
class IcfFactor:
    """Rank-R factor of one column block (or of the whole set).

    Rows beyond the effective rank are zero padding from early
    termination; pivot_ids lists the chosen pivots in order.
    """

    entries: np.ndarray  # (rank, n_cols)
    pivot_ids: np.ndarray  # (effective_rank,)
    effective_rank: int

    @property
    def rank(self):
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class IcfLocalSummary:
    """One machine's factor-side projections."""

    y: np.ndarray  # (rank,) projected residuals
    cross: np.ndarray  # (rank, n_query) projected query covariance
    gram: np.ndarray  # (rank, rank) factor gram block, symmetric PSD


@dataclass(frozen=True, eq=False)
class IcfGlobalSummary:
    """Master-side fusion of the factor summaries."""

    y: np.ndarray  # (rank,)
    cross: np.ndarray  # (rank, n_query)
    gram: np.ndarray  # (rank, rank) identity plus noise-scaled gram sum


class SqexpColumns:
    """Column source for factorizing the noise-free kernel matrix of a
    point set; pivot columns rebuild from broadcast coordinates alone."""

    def __init__(self, points, h):
        self.coords = np.ascontiguousarray(points.coords)
        self.ids = points.ids
        self.h = h
        self.inv_ls = 1.0 / h.length_scales
        self.scale = h.signal_variance

    def __len__(self):
        return self.coords.shape[0]

    def diag(self):
        return np.full(self.coords.shape[0], self.h.signal_variance)

    def column(self, payload):
        return sqexp_row(payload, self.coords, self.inv_ls, self.h.signal_variance)

    def payload(self, j):
        return self.coords[j].copy()


class MatrixColumns:
    """Column source backed by an explicit PSD matrix (single block only)."""

    def __init__(self, k, ids=None):
        self.k = np.asarray(k, dtype=np.float64)
        n = self.k.shape[0]
        self.ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        self.scale = float(np.max(np.diag(self.k))) if n else 1.0

    def __len__(self):
        return self.k.shape[0]

    def diag(self):
        return np.diag(self.k).copy()

    def column(self, payload):
        return self.k[int(payload)].copy()

    def payload(self, j):
        return int(j)


class FactorState:
    """Per-machine residual state of the pivoted factorization."""

    def __init__(self, source, rank):
        self.source = source
        self.ids = source.ids
        self.rank = rank
        self.resid = source.diag().copy()
        self.entries = np.zeros((rank, len(source)))
        self.pivoted = np.zeros(len(source), dtype=bool)
        self.step = 0

    def best_candidate(self):
        """(residual, id) of this machine's best pivot, or None if spent."""
        active = ~self.pivoted
        if not np.any(active):
            return None
        vals = np.where(active, self.resid, -np.inf)
        best = np.max(vals)
        tied = np.flatnonzero(vals == best)
        j = tied[np.argmin(self.ids[tied])]
        return float(self.resid[j]), int(self.ids[j])

    def pivot_payload(self, pivot_id):
        """Column data the winner broadcasts: point payload, factor
        column prefix, and the pivot value."""
        j = int(np.flatnonzero(self.ids == pivot_id)[0])
        return (
            self.source.payload(j),
            int(pivot_id),
            self.entries[: self.step, j].copy(),
            float(np.sqrt(self.resid[j])),
        )

    def apply_pivot(self, payload):
        point_payload, pivot_id, fcol, piv = payload
        krow = self.source.column(point_payload)
        row = residual_row(self.entries[: self.step], fcol, krow, piv)
        row[self.pivoted] = 0.0
        mine = np.flatnonzero(self.ids == pivot_id)
        if len(mine):
            row[mine[0]] = piv
        self.entries[self.step] = row
        self.resid -= row * row
        if len(mine):
            self.pivoted[mine[0]] = True
        self.resid[self.pivoted] = 0.0
        low = float(np.min(self.resid)) if len(self.resid) else 0.0
        if low < -BREAKDOWN_RTOL * self.source.scale:
            raise IcfBreakdownError(
                f"diagonal residual {low:.3e} fell below tolerance at step {self.step}"
            )
        self.step += 1


def reduce_candidates(candidates):
    """Best (residual, id) across machines: max residual, ties to lowest id."""
    best = None
    winner = -1
    for m, cand in enumerate(candidates):
        if cand is None:
            continue
        if (
            best is None
            or cand[0] > best[0]
            or (cand[0] == best[0] and cand[1] < best[1])
        ):
            best = cand
            winner = m
    return best, winner


def _drive(states, rank, scale, ledger=None):
    """Run the pivot loop over one or more machine states."""
    stop = EARLY_STOP_RTOL * scale
    pivot_ids = []
    for _ in range(rank):
        candidates = [st.best_candidate() for st in states]
        if ledger is not None:
            ledger.record_reduction()
            for cand in candidates:
                ledger.record_message("icf-pivot-candidate", 1)
        best, winner = reduce_candidates(candidates)
        if best is None or best[0] < stop:
            break
        payload = states[winner].pivot_payload(best[1])
        if ledger is not None:
            ledger.record_broadcast()
            ledger.record_message(
                "icf-pivot-row", len(payload[2]) + 1 + _payload_reals(payload[0])
            )
        for st in states:
            st.apply_pivot(payload)
        pivot_ids.append(best[1])
    return np.asarray(pivot_ids, dtype=np.int64)


def _payload_reals(point_payload):
    return point_payload.size if isinstance(point_payload, np.ndarray) else 0


def factor_serial(points, rank, h):
    """Reference greedy pivoted factorization over all columns at once."""
    return factor_source_serial(SqexpColumns(points, h), rank)


def factor_source_serial(source, rank):
    if not 1 <= rank <= len(source):
        raise ValueError(f"rank {rank} out of range for {len(source)} columns")
    state = FactorState(source, rank)
    pivot_ids = _drive([state], rank, source.scale)
    return IcfFactor(state.entries, pivot_ids, len(pivot_ids))


def factor_distributed(point_blocks, rank, h, ledger=None):
    """Block-distributed factorization; stacking the per-block results
    reproduces the serial factor of the concatenated points exactly.

    Each pivot step is one max-reduction over per-machine candidates and
    one broadcast of the winning column's data.
    """
    sources = [SqexpColumns(pts, h) for pts in point_blocks]
    total = sum(len(s) for s in sources)
    if not 1 <= rank <= total:
        raise ValueError(f"rank {rank} out of range for {total} columns")
    states = [FactorState(src, rank) for src in sources]
    pivot_ids = _drive(states, rank, sources[0].scale, ledger)
    eff = len(pivot_ids)
    return [IcfFactor(st.entries, pivot_ids, eff) for st in states]


def local_summary(block, factor_entries, query_pts, h):
    """Project a block's residuals, query covariance, and gram through
    its factor columns."""
    entries = np.asarray(factor_entries, dtype=np.float64)
    if entries.shape[1] != block.n:
        raise ValueError(
            f"factor has {entries.shape[1]} columns for a block of {block.n}"
        )
    return IcfLocalSummary(
        entries @ block.residual(),
        entries @ cov_matrix(block.x, query_pts, h),
        entries @ entries.T,
    )


def _gram_total(local_summaries, h):
    if h.noise_variance <= 0:
        raise ValueError("reduced-rank prediction requires positive noise variance")
    rank = local_summaries[0].gram.shape[0]
    gram = np.eye(rank)
    for loc in local_summaries:
        gram = gram + loc.gram / h.noise_variance
    return gram


def gram_factor(gram):
    # identity plus a PSD sum: must factor without jitter
    try:
        lower = scipy.linalg.cholesky(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - structurally PD
        raise IcfBreakdownError("fused gram matrix lost positive definiteness") from exc
    return lower


def global_summary(local_summaries, h):
    """Fuse factor summaries: solve the noise-regularized gram against
    the summed projections (ascending machine order)."""
    gram = _gram_total(local_summaries, h)
    lower = gram_factor(gram)
    y = np.zeros_like(local_summaries[0].y)
    cross = np.zeros_like(local_summaries[0].cross)
    for loc in local_summaries:
        y = y + loc.y
        cross = cross + loc.cross
    y = scipy.linalg.cho_solve((lower, True), y, check_finite=False)
    cross = scipy.linalg.cho_solve((lower, True), cross, check_finite=False)
    return IcfGlobalSummary(y, cross, gram)


def fuse_partials(partials, h):
    """Fused gram and solved residual projection from (y_m, gram_m) pairs."""
    if h.noise_variance <= 0:
        raise ValueError("reduced-rank prediction requires positive noise variance")
    rank = partials[0][1].shape[0]
    gram = np.eye(rank)
    y = np.zeros(rank)
    for ym, gm in partials:
        gram = gram + gm / h.noise_variance
        y = y + ym
    y = scipy.linalg.cho_solve((gram_factor(gram), True), y, check_finite=False)
    return gram, y


def global_summary_partitioned(partials, slice_blocks, slice_idx, n_query, h):
    """Assemble the global summary from per-query-slice pieces.

    partials[m] is (y_m, gram_m); slice_blocks[m][i] is machine m's
    cross projection onto query slice i; slice_idx[i] are the original
    query positions of slice i.  The concatenation equals the
    unpartitioned cross summary up to solver rounding.
    """
    machines = len(partials)
    gram, y = fuse_partials(partials, h)
    lower = gram_factor(gram)
    rank = gram.shape[0]
    cross = np.zeros((rank, n_query))
    for i in range(len(slice_idx)):
        idx = np.asarray(slice_idx[i], dtype=np.intp)
        if len(idx) == 0:
            continue
        part = np.zeros((rank, len(idx)))
        for m in range(machines):
            part = part + slice_blocks[m][i]
        cross[:, idx] = scipy.linalg.cho_solve((lower, True), part, check_finite=False)
    return IcfGlobalSummary(y, cross, gram)


def predictive_component(block, local, glob, query_pts, h, want_full_cov=False):
    """One machine's additive share of the predictive mean and covariance."""
    if h.noise_variance <= 0:
        raise ValueError("reduced-rank prediction requires positive noise variance")
    inv_n = 1.0 / h.noise_variance
    inv_n2 = inv_n * inv_n
    v_ud = cov_matrix(query_pts, block.x, h)
    mean_part = inv_n * (v_ud @ block.residual()) - inv_n2 * (local.cross.T @ glob.y)
    if want_full_cov:
        cov_part = inv_n * (v_ud @ v_ud.T) - inv_n2 * (local.cross.T @ glob.cross)
        return mean_part, cov_part
    var_part = inv_n * np.einsum("ij,ij->i", v_ud, v_ud) - inv_n2 * np.einsum(
        "ru,ru->u", local.cross, glob.cross
    )
    return mean_part, var_part


def predict_from_components(parts, query_pts, h, prior_mean=0.0,
                            want_full_cov=False):
    """Master assembly: prior plus the machine components, summed in
    ascending machine order.  Variances are not clamped."""
    mean = np.full(len(query_pts), prior_mean)
    if want_full_cov:
        cov = cov_matrix(query_pts, query_pts, h)
        for mean_part, cov_part in parts:
            mean = mean + mean_part
            cov = cov - cov_part
        return Prediction(mean, cov=cov)
    var = prior_variances(query_pts, h)
    for mean_part, var_part in parts:
        mean = mean + mean_part
        var = var - var_part
    return Prediction(mean, var)


def centralized_icf(train, factor_entries, query_pts, h, want_full_cov=False):
    """Dense reduced-rank predictor solving the regularized normal matrix
    directly; the independent oracle for the distributed assembly."""
    if h.noise_variance <= 0:
        raise ValueError("reduced-rank prediction requires positive noise variance")
    entries = np.asarray(factor_entries, dtype=np.float64)
    approx = entries.T @ entries + h.noise_variance * np.eye(train.n)
    fac = pd_factor(approx, check_symmetry=False)
    v_ud = cov_matrix(query_pts, train.x, h)
    mean = train.prior_mean + v_ud @ fac.solve(train.residual())
    back = fac.solve(v_ud.T)
    if want_full_cov:
        return Prediction(mean, cov=cov_matrix(query_pts, query_pts, h) - v_ud @ back)
    var = prior_variances(query_pts, h) - np.einsum("ij,ji->i", v_ud, back)
    return Prediction(mean, var)
