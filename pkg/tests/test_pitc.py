import math

import numpy as np
import pytest

from pargp import pitc
from pargp.core import Dataset, Hyperparams, Points
from pargp.exact import fgp_predict
from pargp.partition import partition_even, select_support_set, support_candidates

from conftest import make_instance
from oracles import pic_dense, pitc_dense


def setup_instance(seed, n=96, nq=16, machines=4, k=12):
    train, query, h = make_instance(seed, n, nq)
    support = select_support_set(support_candidates(train, n, seed + 1), k, h)
    part = partition_even(train, query, machines)
    return train, query, h, support, part


def all_local_summaries(train, part, support, h):
    return [pitc.local_summary(train.take(ix), support, h) for ix in part.train_idx]


def test_local_summary_zero_residuals():
    train, query, h, support, part = setup_instance(31)
    flat = Dataset(train.x, np.full(train.n, 2.5), 2.5)
    loc = pitc.local_summary(flat, support, h)
    np.testing.assert_array_equal(loc.y, np.zeros(len(support)))


def test_local_summary_scalar_case():
    # one support point and one data point: both formulas collapse to scalars
    h = Hyperparams(1.0, 0.25, np.array([1.0]))
    support = Points([[0.0]], [-1])
    block = Dataset(Points([[1.0]], [0]), [3.0])
    loc = pitc.local_summary(block, support, h)
    s_sd = math.exp(-0.5)
    s_ss = 1.25
    s_dd = 1.25
    cond = s_dd - s_sd**2 / s_ss
    assert loc.y[0] == pytest.approx(s_sd * 3.0 / cond, rel=1e-12)
    assert loc.cov[0, 0] == pytest.approx(s_sd**2 / cond, rel=1e-12)


def test_local_summary_symmetric_psd():
    train, query, h, support, part = setup_instance(32)
    loc = pitc.local_summary(train.take(part.train_idx[0]), support, h)
    np.testing.assert_allclose(loc.cov, loc.cov.T, atol=1e-9)
    eigvals = np.linalg.eigvalsh(0.5 * (loc.cov + loc.cov.T))
    assert eigvals.min() >= -1e-9


def test_local_summary_empty_block():
    _, _, h, support, _ = setup_instance(33)
    empty = Dataset(Points(np.zeros((0, 2)), np.zeros(0, dtype=int)), np.zeros(0))
    loc = pitc.local_summary(empty, support, h)
    np.testing.assert_array_equal(loc.y, np.zeros(len(support)))
    np.testing.assert_array_equal(loc.cov, np.zeros((len(support),) * 2))


def test_global_summary_additivity():
    train, query, h, support, part = setup_instance(34, machines=2)
    locs = all_local_summaries(train, part, support, h)
    zero = pitc.PitcLocalSummary(
        np.zeros(len(support)), np.zeros((len(support), len(support)))
    )
    with_zero = pitc.global_summary([locs[0], zero], support, h)
    alone = pitc.global_summary([locs[0]], support, h)
    np.testing.assert_array_equal(with_zero.y, alone.y)
    np.testing.assert_array_equal(with_zero.cov, alone.cov)


def test_global_summary_no_machines_degenerate():
    _, _, h, support, _ = setup_instance(35)
    glob = pitc.global_summary([], support, h)
    from pargp.kernels import cov_matrix

    np.testing.assert_array_equal(glob.y, np.zeros(len(support)))
    np.testing.assert_array_equal(glob.cov, cov_matrix(support, support, h))


def test_global_summary_order_insensitive_to_tolerance():
    train, query, h, support, part = setup_instance(36, machines=4)
    locs = all_local_summaries(train, part, support, h)
    a = pitc.global_summary(locs, support, h)
    b = pitc.global_summary(locs[::-1], support, h)
    assert np.max(np.abs(a.y - b.y)) <= 1e-12
    assert np.max(np.abs(a.cov - b.cov)) <= 1e-12


def test_global_summary_concatenation_additivity():
    # fusing a concatenated list equals adding the two fusions minus the
    # double-counted support prior
    train, query, h, support, part = setup_instance(53, machines=4)
    locs = all_local_summaries(train, part, support, h)
    from pargp.kernels import cov_matrix

    whole = pitc.global_summary(locs, support, h)
    first = pitc.global_summary(locs[:2], support, h)
    second = pitc.global_summary(locs[2:], support, h)
    np.testing.assert_allclose(whole.y, first.y + second.y, atol=1e-12)
    np.testing.assert_allclose(
        whole.cov,
        first.cov + second.cov - cov_matrix(support, support, h),
        atol=1e-12,
    )


def test_global_summary_dominates_support_prior():
    train, query, h, support, part = setup_instance(37)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    from pargp.kernels import cov_matrix

    gap = glob.cov - cov_matrix(support, support, h)
    assert np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() >= -1e-9


def test_global_summary_size_mismatch():
    _, _, h, support, _ = setup_instance(38)
    bad = pitc.PitcLocalSummary(np.zeros(3), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="machine 0"):
        pitc.global_summary([bad], support, h)


def test_ppitc_zero_residuals_gives_prior_mean():
    train, query, h, support, part = setup_instance(39)
    flat = Dataset(train.x, np.full(train.n, 1.5), 1.5)
    locs = all_local_summaries(flat, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    pred = pitc.ppitc_predict_block(query, support, glob, h, prior_mean=1.5)
    np.testing.assert_allclose(pred.mean, np.full(len(query), 1.5), atol=1e-12)


def test_ppic_zero_residuals_gives_prior_mean():
    train, query, h, support, part = setup_instance(40)
    flat = Dataset(train.x, np.full(train.n, -0.5), -0.5)
    locs = all_local_summaries(flat, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    block = flat.take(part.train_idx[0])
    pred = pitc.ppic_predict_block(
        block, query.take(part.query_idx[0]), support, locs[0], glob, h
    )
    np.testing.assert_allclose(pred.mean, np.full(len(pred), -0.5), atol=1e-12)


def _assemble(blocks_pred, part, nq):
    mean = np.empty(nq)
    var = np.empty(nq)
    for m, pred in enumerate(blocks_pred):
        mean[part.query_idx[m]] = pred.mean
        var[part.query_idx[m]] = pred.var
    return mean, var


def test_ppitc_assembled_equals_centralized():
    train, query, h, support, part = setup_instance(41, n=256, nq=32, machines=4, k=32)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    preds = [
        pitc.ppitc_predict_block(
            query.take(ix), support, glob, h, train.prior_mean
        )
        for ix in part.query_idx
    ]
    mean, var = _assemble(preds, part, len(query))
    central = pitc.centralized_pitc(train, part, query, support, h)
    assert np.max(np.abs(mean - central.mean)) <= 1e-8
    assert np.max(np.abs(var - central.var)) <= 1e-8


def test_ppic_assembled_equals_centralized():
    train, query, h, support, part = setup_instance(42, n=256, nq=32, machines=4, k=32)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    preds = [
        pitc.ppic_predict_block(
            train.take(part.train_idx[m]), query.take(part.query_idx[m]),
            support, locs[m], glob, h,
        )
        for m in range(part.machines)
    ]
    mean, var = _assemble(preds, part, len(query))
    central = pitc.centralized_pic(train, part, query, support, h)
    assert np.max(np.abs(mean - central.mean)) <= 1e-8
    assert np.max(np.abs(var - central.var)) <= 1e-8


def test_ppic_single_machine_equals_fgp():
    train, query, h, support, _ = setup_instance(43, n=64, nq=12)
    part = partition_even(train, query, 1)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    pred = pitc.ppic_predict_block(train, query, support, locs[0], glob, h)
    exact = fgp_predict(train, query, h)
    assert np.max(np.abs(pred.mean - exact.mean)) <= 1e-8
    assert np.max(np.abs(pred.var - exact.var)) <= 1e-8


def test_ppitc_single_machine_equals_centralized():
    # the M=1 identity that actually holds: parallel equals centralized
    train, query, h, support, _ = setup_instance(44, n=64, nq=12)
    part = partition_even(train, query, 1)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    pred = pitc.ppitc_predict_block(query, support, glob, h, train.prior_mean)
    central = pitc.centralized_pitc(train, part, query, support, h)
    assert np.max(np.abs(pred.mean - central.mean)) <= 1e-10
    assert np.max(np.abs(pred.var - central.var)) <= 1e-10


def test_centralized_pitc_single_block_equals_fgp():
    train, query, h, support, _ = setup_instance(45, n=48, nq=10)
    part = partition_even(train, query, 1)
    central = pitc.centralized_pitc(train, part, query, support, h)
    exact = fgp_predict(train, query, h)
    # the training matrix collapses to the exact covariance, but the
    # train-query covariance still routes through the support set, so
    # the predictor stays a low-rank approximation of the exact GP
    assert np.max(np.abs(central.mean - exact.mean)) > 1e-6


def test_centralized_pitc_mean_shift_invariance():
    train, query, h, support, part = setup_instance(46, n=64, nq=8)
    base = pitc.centralized_pitc(train, part, query, support, h)
    shifted_train = Dataset(train.x, train.y + 4.0, train.prior_mean + 4.0)
    shifted = pitc.centralized_pitc(shifted_train, part, query, support, h)
    np.testing.assert_allclose(shifted.mean, base.mean + 4.0, atol=1e-9)
    np.testing.assert_array_equal(shifted.var, base.var)


def test_centralized_pitc_matches_transcription():
    train, query, h, support, part = setup_instance(47, n=96, nq=16, machines=3)
    central = pitc.centralized_pitc(train, part, query, support, h, want_full_cov=True)
    mean, cov = pitc_dense(train, part, query, support, h)
    assert np.max(np.abs(central.mean - mean)) <= 1e-10
    assert np.max(np.abs(central.cov - cov)) <= 1e-10


def test_centralized_pic_matches_transcription():
    train, query, h, support, part = setup_instance(48, n=96, nq=16, machines=3)
    central = pitc.centralized_pic(train, part, query, support, h, want_full_cov=True)
    mean, cov = pic_dense(train, part, query, support, h)
    assert np.max(np.abs(central.mean - mean)) <= 1e-10
    assert np.max(np.abs(central.cov - cov)) <= 1e-10


def test_centralized_pic_single_block_equals_fgp():
    train, query, h, support, _ = setup_instance(49, n=48, nq=10)
    part = partition_even(train, query, 1)
    central = pitc.centralized_pic(train, part, query, support, h)
    exact = fgp_predict(train, query, h)
    assert np.max(np.abs(central.mean - exact.mean)) <= 1e-10
    assert np.max(np.abs(central.var - exact.var)) <= 1e-10


def test_pic_with_low_rank_branch_equals_pitc():
    # suppressing the exact train-query branch must reproduce PITC
    train, query, h, support, part = setup_instance(50, n=72, nq=12, machines=3)
    mean_lr, cov_lr = pic_dense(train, part, query, support, h, force_low_rank=True)
    central = pitc.centralized_pitc(train, part, query, support, h, want_full_cov=True)
    assert np.max(np.abs(central.mean - mean_lr)) <= 1e-12
    assert np.max(np.abs(central.cov - cov_lr)) <= 1e-12


def test_block_covariances_symmetric_and_variances_nonnegative():
    train, query, h, support, part = setup_instance(51, n=128, nq=24, machines=4)
    locs = all_local_summaries(train, part, support, h)
    glob = pitc.global_summary(locs, support, h)
    for m in range(part.machines):
        qb = query.take(part.query_idx[m])
        a = pitc.ppitc_predict_block(qb, support, glob, h, want_full_cov=True)
        b = pitc.ppic_predict_block(
            train.take(part.train_idx[m]), qb, support, locs[m], glob, h,
            want_full_cov=True,
        )
        assert np.max(np.abs(a.cov - a.cov.T)) <= 1e-9
        assert np.max(np.abs(b.cov - b.cov.T)) <= 1e-9
        assert a.var.min() >= -1e-9
        assert b.var.min() >= -1e-9


def test_summaries_use_support_inputs_only():
    # the support carries no outputs at the type level; moving support
    # ids (but not coordinates) must not change the summary values
    train, query, h, support, part = setup_instance(52)
    loc = pitc.local_summary(train.take(part.train_idx[0]), support, h)
    relabeled = Points(support.coords, support.ids - 1000)
    loc2 = pitc.local_summary(train.take(part.train_idx[0]), relabeled, h)
    np.testing.assert_array_equal(loc.y, loc2.y)
    np.testing.assert_array_equal(loc.cov, loc2.cov)
