"""Support-set summaries and the PITC / PIC family of predictors.

Each machine compresses its block against a common support set into a
local summary; the master fuses the summaries additively into a global
summary; predictions then need only the summaries (PITC) or the
summaries plus the block's own data (PIC).  The centralized PITC and
PIC predictors are implemented independently as dense formulas and the
distributed assembly matches them exactly up to floating-point error.
"""

from dataclasses import dataclass

import numpy as np

from .core import Prediction
from .kernels import cov_matrix, prior_variances
from .linalg import pd_factor


@dataclass(frozen=True, eq=False)
class PitcLocalSummary:
    """One machine's compression of its block against the support set."""

    y: np.ndarray  # (s,) projected output residuals
    cov: np.ndarray  # (s, s) projected covariance, symmetric PSD

    @property
    def support_size(self):
        return self.y.shape[0]


@dataclass(frozen=True, eq=False)
class PitcGlobalSummary:
    """Master-side fusion: support covariance plus all local summaries."""

    y: np.ndarray  # (s,)
    cov: np.ndarray  # (s, s)


def _conditional_block_factor(block, support, h, support_factor):
    """Factor of the block covariance conditioned on the support set."""
    v_sd = cov_matrix(support, block.x, h)
    cond = cov_matrix(block.x, block.x, h) - v_sd.T @ support_factor.solve(v_sd)
    # symmetric within rounding by construction; the factor reads one triangle
    return v_sd, pd_factor(cond, check_symmetry=False)


def local_summary(block, support, h):
    """Project a block's residuals and covariance onto the support set.

    Only the support inputs are used; support outputs do not exist.
    An empty block contributes zeros.
    """
    s = len(support)
    if block.n == 0:
        return PitcLocalSummary(np.zeros(s), np.zeros((s, s)))
    support_factor = pd_factor(cov_matrix(support, support, h), check_symmetry=False)
    v_sd, cond = _conditional_block_factor(block, support, h, support_factor)
    back = cond.solve(v_sd.T)
    return PitcLocalSummary(v_sd @ cond.solve(block.residual()), v_sd @ back)


def global_summary(local_summaries, support, h):
    """Sum local summaries in ascending machine order onto the support prior."""
    s = len(support)
    y = np.zeros(s)
    cov = cov_matrix(support, support, h)
    for m, loc in enumerate(local_summaries):
        if loc.support_size != s:
            raise ValueError(
                f"machine {m} summary has size {loc.support_size}, expected {s}"
            )
        y = y + loc.y
        cov = cov + loc.cov
    return PitcGlobalSummary(y, cov)


def ppitc_predict_block(query_pts, support, glob, h, prior_mean=0.0,
                        want_full_cov=False):
    """PITC prediction for one machine's query slice from the global summary."""
    v_us = cov_matrix(query_pts, support, h)
    support_factor = pd_factor(cov_matrix(support, support, h), check_symmetry=False)
    fused_factor = pd_factor(glob.cov, check_symmetry=False)
    mean = prior_mean + v_us @ fused_factor.solve(glob.y)
    prior_back = support_factor.solve(v_us.T)
    fused_back = fused_factor.solve(v_us.T)
    if want_full_cov:
        cov = cov_matrix(query_pts, query_pts, h) - v_us @ (prior_back - fused_back)
        return Prediction(mean, cov=cov)
    var = prior_variances(query_pts, h) - np.einsum(
        "ij,ji->i", v_us, prior_back - fused_back
    )
    return Prediction(mean, var)


def ppic_predict_block(block, query_pts, support, local, glob, h,
                       want_full_cov=False):
    """PIC prediction for one machine: global summary plus its own block.

    The cross projections of the block onto the query slice are
    computed here from the local data; they never travel as messages.
    """
    if block.n == 0:
        return ppitc_predict_block(
            query_pts, support, glob, h, block.prior_mean, want_full_cov
        )
    support_factor = pd_factor(cov_matrix(support, support, h), check_symmetry=False)
    fused_factor = pd_factor(glob.cov, check_symmetry=False)
    v_us = cov_matrix(query_pts, support, h)
    v_sd, cond = _conditional_block_factor(block, support, h, support_factor)
    v_ud = cov_matrix(query_pts, block.x, h)

    local_mean = v_ud @ cond.solve(block.residual())
    cross_us = v_ud @ cond.solve(v_sd.T)  # block projection onto (query, support)
    w = support_factor.solve(v_us.T)  # (s, u)
    bridge = v_us + (local.cov @ w).T - cross_us

    mean = (
        block.prior_mean
        + bridge @ fused_factor.solve(glob.y)
        - v_us @ support_factor.solve(local.y)
        + local_mean
    )
    # bracketed correction, symmetric by construction:
    #   bridge@w + (bridge@w)' - v_us@w - w'•local.cov•w - bridge@fused^-1@bridge'
    fused_bridge = fused_factor.solve(bridge.T)
    back_ud = cond.solve(v_ud.T)
    if want_full_cov:
        t1 = bridge @ w
        cov = (
            cov_matrix(query_pts, query_pts, h)
            - t1
            - t1.T
            + v_us @ w
            + w.T @ local.cov @ w
            + bridge @ fused_bridge
            - v_ud @ back_ud
        )
        return Prediction(mean, cov=cov)
    var = (
        prior_variances(query_pts, h)
        - 2.0 * np.einsum("ij,ji->i", bridge, w)
        + np.einsum("ij,ji->i", v_us, w)
        + np.einsum("ji,jk,ki->i", w, local.cov, w)
        + np.einsum("ij,ji->i", bridge, fused_bridge)
        - np.einsum("ij,ji->i", v_ud, back_ud)
    )
    return Prediction(mean, var)


def _gamma(a_pts, b_pts, support, h, support_factor):
    """Low-rank cross-covariance through the support set."""
    v_as = cov_matrix(a_pts, support, h)
    v_sb = cov_matrix(support, b_pts, h)
    return v_as @ support_factor.solve(v_sb)


def _pitc_train_factor(train_cat, blocks, support, h, support_factor):
    """Factor of the PITC training covariance: low-rank part plus the
    block-diagonal of the conditional block covariances."""
    a = _gamma(train_cat.x, train_cat.x, support, h, support_factor)
    offset = 0
    for block in blocks:
        sl = slice(offset, offset + block.n)
        v_sd = cov_matrix(support, block.x, h)
        cond = cov_matrix(block.x, block.x, h) - v_sd.T @ support_factor.solve(v_sd)
        a[sl, sl] += cond
        offset += block.n
    return pd_factor(a, check_symmetry=False)


def centralized_pitc(train, part, query_pts, support, h, want_full_cov=False):
    """Dense PITC predictor; the oracle the distributed assembly must match."""
    support_factor = pd_factor(cov_matrix(support, support, h), check_symmetry=False)
    blocks = part.train_blocks(train)
    order = np.concatenate(part.train_idx)
    train_cat = train.take(order)
    fac = _pitc_train_factor(train_cat, blocks, support, h, support_factor)
    g_ud = _gamma(query_pts, train_cat.x, support, h, support_factor)
    mean = train.prior_mean + g_ud @ fac.solve(train_cat.residual())
    back = fac.solve(g_ud.T)
    if want_full_cov:
        return Prediction(mean, cov=cov_matrix(query_pts, query_pts, h) - g_ud @ back)
    var = prior_variances(query_pts, h) - np.einsum("ij,ji->i", g_ud, back)
    return Prediction(mean, var)


def centralized_pic(train, part, query_pts, support, h, want_full_cov=False):
    """Dense PIC predictor: each query block keeps its exact covariance
    with its paired training block; all other cross blocks go through
    the support set."""
    support_factor = pd_factor(cov_matrix(support, support, h), check_symmetry=False)
    blocks = part.train_blocks(train)
    order = np.concatenate(part.train_idx)
    train_cat = train.take(order)
    fac = _pitc_train_factor(train_cat, blocks, support, h, support_factor)

    g_ud = _gamma(query_pts, train_cat.x, support, h, support_factor)
    offset = 0
    for m, block in enumerate(blocks):
        cols = slice(offset, offset + block.n)
        rows = part.query_idx[m]
        if len(rows):
            g_ud[rows, cols] = cov_matrix(query_pts.take(rows), block.x, h)
        offset += block.n

    mean = train.prior_mean + g_ud @ fac.solve(train_cat.residual())
    back = fac.solve(g_ud.T)
    if want_full_cov:
        return Prediction(mean, cov=cov_matrix(query_pts, query_pts, h) - g_ud @ back)
    var = prior_variances(query_pts, h) - np.einsum("ij,ji->i", g_ud, back)
    return Prediction(mean, var)
