import numpy as np
import pytest

from pargp.core import Hyperparams
from pargp.data import (
    generate_synthetic,
    generate_synthetic_tiled,
    load_csv,
    save_csv,
    train_test_split,
)


def h2(signal=1.0, noise=0.1, length=1.5):
    return Hyperparams(signal, noise, np.array([length, length]))


def test_synthetic_reproducible():
    a_train, a_test = generate_synthetic(2, 20, 5, h2(), seed=3)
    b_train, b_test = generate_synthetic(2, 20, 5, h2(), seed=3)
    np.testing.assert_array_equal(a_train.x.coords, b_train.x.coords)
    np.testing.assert_array_equal(a_train.y, b_train.y)
    np.testing.assert_array_equal(a_test.y, b_test.y)


def test_synthetic_ids_disjoint_and_sizes():
    train, test = generate_synthetic(3, 17, 6, Hyperparams(1.0, 0.2, np.ones(3)), 0)
    assert train.n == 17 and test.n == 6
    assert len(np.intersect1d(train.x.ids, test.x.ids)) == 0


def test_synthetic_zero_signal_is_pure_noise():
    h = Hyperparams(0.0, 0.36, np.array([1.0]))
    train, _ = generate_synthetic(1, 512, 0, h, seed=5, prior_mean=2.0)
    resid = train.y - 2.0
    assert abs(resid.mean()) < 0.1
    assert abs(resid.var() - 0.36) < 0.08


def test_synthetic_variance_matches_prior():
    # marginal variance of a short-length-scale draw approaches
    # signal + noise; median over seeds to damp draw-to-draw wobble
    h = Hyperparams(1.0, 0.25, np.array([0.4, 0.4]))
    variances = []
    for seed in range(5):
        train, _ = generate_synthetic(2, 2048, 0, h, seed)
        variances.append(train.y.var())
    med = float(np.median(variances))
    assert abs(med - 1.25) <= 0.2 * 1.25


def test_synthetic_cap():
    with pytest.raises(ValueError, match="cap"):
        generate_synthetic(2, 4000, 1000, h2(), 0)


def test_tiled_generation_beyond_cap():
    train, test = generate_synthetic_tiled(2, 4500, 500, h2(), seed=6)
    assert train.n == 4500 and test.n == 500
    all_ids = np.concatenate([train.x.ids, test.x.ids])
    assert len(np.unique(all_ids)) == 5000
    # marginal statistics still look like the prior
    assert abs(train.y.var() - 1.1) < 0.35


def test_tiled_falls_back_to_exact_draw_under_cap():
    a = generate_synthetic_tiled(2, 30, 10, h2(), seed=7)
    b = generate_synthetic(2, 30, 10, h2(), seed=7)
    np.testing.assert_array_equal(a[0].y, b[0].y)
    np.testing.assert_array_equal(a[1].x.coords, b[1].x.coords)


def test_split_deterministic_and_disjoint():
    train, _ = generate_synthetic(2, 50, 0, h2(), 1)
    a_fit, a_test = train_test_split(train, seed=9)
    b_fit, b_test = train_test_split(train, seed=9)
    np.testing.assert_array_equal(a_fit.x.ids, b_fit.x.ids)
    np.testing.assert_array_equal(a_test.x.ids, b_test.x.ids)
    assert a_test.n == 5
    assert len(np.intersect1d(a_fit.x.ids, a_test.x.ids)) == 0


def test_csv_round_trip(tmp_path):
    train, _ = generate_synthetic(3, 12, 0, Hyperparams(1.0, 0.1, np.ones(3)), 2)
    path = tmp_path / "train.csv"
    save_csv(train, path)
    loaded = load_csv(path)
    np.testing.assert_array_equal(loaded.x.coords, train.x.coords)
    np.testing.assert_array_equal(loaded.y, train.y)


def test_csv_points_only(tmp_path):
    train, _ = generate_synthetic(2, 6, 0, h2(), 4)
    path = tmp_path / "grid.csv"
    save_csv(train.x, path)
    pts = load_csv(path)
    assert not hasattr(pts, "y")
    np.testing.assert_array_equal(pts.coords, train.x.coords)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="expected columns"):
        load_csv(path)
