import numpy as np
import pytest

from pargp.core import Dataset, Hyperparams, Points
from pargp.exact import fgp_predict
from pargp.partition import (
    partition_clustered,
    partition_even,
    round_robin_origin,
    select_support_set,
    support_candidates,
)

from conftest import make_instance


def toy_train(coords, prior=0.0):
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    return Dataset(
        Points(coords, np.arange(len(coords))), np.zeros(len(coords)), prior
    )


def no_query(d=1):
    return Points(np.zeros((0, d)), np.zeros(0, dtype=int))


def test_even_eight_over_four():
    part = partition_even(toy_train(np.arange(8.0)), no_query(), 4)
    assert [len(ix) for ix in part.train_idx] == [2, 2, 2, 2]


def test_even_single_machine():
    train = toy_train(np.arange(5.0))
    part = partition_even(train, no_query(), 1)
    np.testing.assert_array_equal(part.train_idx[0], np.arange(5))


def test_even_uneven_sizes():
    part = partition_even(toy_train(np.arange(7.0)), no_query(), 2)
    assert sorted(len(ix) for ix in part.train_idx) == [3, 4]


def test_even_too_many_machines():
    with pytest.raises(ValueError, match="cannot split"):
        partition_even(toy_train(np.arange(3.0)), no_query(), 4)


def test_even_is_round_robin():
    part = partition_even(toy_train(np.arange(10.0)), no_query(), 3)
    origin = round_robin_origin(10, 3)
    for m, ix in enumerate(part.train_idx):
        assert np.all(origin[ix] == m)


def _union_ids(blocks):
    return np.sort(np.concatenate([b.x.ids for b in blocks]))


@pytest.mark.parametrize("mode", ["even", "clustered"])
def test_partitions_preserve_the_multiset(mode):
    train, query, h = make_instance(21, 37, 11)
    if mode == "even":
        part = partition_even(train, query, 4)
    else:
        part = partition_clustered(train, query, 4, seed=5)
    blocks = part.train_blocks(train)
    np.testing.assert_array_equal(_union_ids(blocks), np.sort(train.x.ids))
    q_all = np.sort(np.concatenate(part.query_idx))
    np.testing.assert_array_equal(q_all, np.arange(len(query)))
    # disjointness comes free from the multiset equality plus sizes
    assert sum(len(ix) for ix in part.train_idx) == train.n


def test_clustered_nearest_assignment():
    # centers are drawn from the even blocks; with one point per block the
    # centers are the points themselves and assignment is by distance
    train = toy_train([0.0, 10.0])
    query = Points(np.array([[0.1], [9.9]]), [100, 101])
    part = partition_clustered(train, query, 2, seed=0)
    m_of_01 = next(m for m, ix in enumerate(part.query_idx) if 0 in ix)
    m_of_99 = next(m for m, ix in enumerate(part.query_idx) if 1 in ix)
    assert 0 in part.train_idx[m_of_01]
    assert 1 in part.train_idx[m_of_99]
    assert m_of_01 != m_of_99


def test_clustered_single_machine():
    train, query, _ = make_instance(22, 9, 4)
    part = partition_clustered(train, query, 1, seed=9)
    assert len(part.train_idx[0]) == 9
    assert len(part.query_idx[0]) == 4


def test_capped_assignment_overflows_farthest():
    # four points all nearest center 0; capacity 2 forces the two
    # farthest-from-center-0 points to overflow to center 1
    from pargp.partition import _assign_capped

    coords = np.array([[1.0], [2.0], [3.0], [4.0]])
    centers = np.array([[0.0], [100.0]])
    blocks = _assign_capped(coords, centers, [2, 2])
    assert blocks[0].tolist() == [0, 1]
    assert blocks[1].tolist() == [2, 3]


def test_clustered_capacity_hand_case():
    # 1-d: centers at 0 and 100, all four query points nearest 0,
    # capacity 2 each: the two closest stay, two farthest overflow
    train = toy_train([0.0, 100.0])
    query = Points(np.array([[1.0], [2.0], [3.0], [4.0]]), np.arange(4) + 10)
    part = partition_clustered(train, query, 2, seed=0)
    m0 = next(m for m, ix in enumerate(part.train_idx) if 0 in ix)
    m1 = 1 - m0
    assert sorted(part.query_idx[m0].tolist()) == [0, 1]
    assert sorted(part.query_idx[m1].tolist()) == [2, 3]


def test_clustered_deterministic():
    train, query, _ = make_instance(23, 40, 16)
    a = partition_clustered(train, query, 4, seed=77)
    b = partition_clustered(train, query, 4, seed=77)
    for xa, xb in zip(a.train_idx + a.query_idx, b.train_idx + b.query_idx):
        np.testing.assert_array_equal(xa, xb)


def test_support_candidates_subsample():
    train, _, _ = make_instance(24, 50, 1)
    pool = support_candidates(train, 20, seed=3)
    assert len(pool) == 20
    assert np.all(np.isin(pool.ids, train.x.ids))
    pool2 = support_candidates(train, 100, seed=3)
    assert len(pool2) == 50


def test_select_first_pick_is_lowest_index():
    # stationary kernel: all prior variances tie, so index 0 wins
    rng = np.random.default_rng(25)
    cands = Points(rng.uniform(0, 10, (10, 2)), np.arange(10))
    h = Hyperparams(1.0, 0.1, np.array([1.0, 1.0]))
    sel = select_support_set(cands, 3, h)
    np.testing.assert_array_equal(sel.coords[0], cands.coords[0])


def test_select_all_candidates():
    rng = np.random.default_rng(26)
    cands = Points(rng.uniform(0, 10, (6, 1)), np.arange(6))
    h = Hyperparams(1.0, 0.1, np.array([1.0]))
    sel = select_support_set(cands, 6, h)
    assert len(sel) == 6
    got = np.sort(sel.coords[:, 0])
    np.testing.assert_array_equal(got, np.sort(cands.coords[:, 0]))


def test_select_collinear_picks_far_point():
    cands = Points(np.array([[0.0], [0.1], [5.0]]), np.arange(3))
    h = Hyperparams(1.0, 0.1, np.array([1.0]))
    sel = select_support_set(cands, 2, h)
    np.testing.assert_array_equal(sel.coords[:, 0], [0.0, 5.0])


def test_select_second_pick_maximizes_residual_variance():
    # verify the greedy claim directly with the exact predictor
    cands = Points(np.array([[0.0], [0.1], [5.0]]), np.arange(3))
    h = Hyperparams(1.0, 0.1, np.array([1.0]))
    first = Dataset(Points([[0.0]], [-1]), [0.0])
    residual = {}
    for j in (1, 2):
        q = Points(cands.coords[[j]], [50 + j])
        residual[j] = fgp_predict(first, q, h).var[0]
    assert residual[2] > residual[1]


def test_select_too_many():
    cands = Points(np.array([[0.0], [1.0]]), [0, 1])
    with pytest.raises(ValueError, match="cannot select"):
        select_support_set(cands, 3, Hyperparams(1.0, 0.1, np.array([1.0])))


def test_select_fresh_negative_ids():
    rng = np.random.default_rng(27)
    cands = Points(rng.uniform(0, 10, (8, 1)), np.arange(8))
    sel = select_support_set(cands, 4, Hyperparams(1.0, 0.1, np.array([1.0])))
    assert np.all(sel.ids < 0)
    assert len(np.unique(sel.ids)) == 4


def test_select_invariant_to_duplicate_ids():
    rng = np.random.default_rng(28)
    coords = rng.uniform(0, 10, (6, 1))
    h = Hyperparams(1.0, 0.1, np.array([1.0]))
    base = Points(coords, np.arange(6))
    sel1 = select_support_set(base, 3, h)
    # Points forbids duplicate ids, so build the duplicated pool by hand
    dup = object.__new__(Points)
    object.__setattr__(dup, "coords", np.vstack([coords, coords[:2]]))
    object.__setattr__(dup, "ids", np.concatenate([np.arange(6), [0, 1]]))
    sel2 = select_support_set(dup, 3, h)
    np.testing.assert_array_equal(sel1.coords, sel2.coords)
