import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolreid.jointdist import (JointDistanceParams, joint_distance, joint_distances,
                                rank_by_joint_distance)
from poolreid.metric import DistanceMatrix, DistanceParams, pool_gallery_distances
from poolreid.rerank import baseline_ranking

from conftest import entry, make_pool, random_gallery
from oracles import joint_distance_reference


def two_member_pool():
    return make_pool([[0.0], [1.0]])


def test_hand_example():
    # E_main=4, E_1=2, kappa=10, eta=0.5, W={0.5,0.5} -> 3.0
    dmat = DistanceMatrix(np.array([[4.0], [2.0]]))
    p = JointDistanceParams(0.5, DistanceParams(10.0))
    assert joint_distance(0, dmat, two_member_pool(), p) == pytest.approx(3.0, abs=1e-15)


def test_all_beyond_kappa_falls_back_to_main():
    dmat = DistanceMatrix(np.array([[4.0], [6.0]]))
    p = JointDistanceParams(0.5, DistanceParams(3.0))
    assert joint_distance(0, dmat, two_member_pool(), p) == 4.0


def test_exclude_main_switch():
    dmat = DistanceMatrix(np.array([[4.0], [2.0]]))
    p = JointDistanceParams(0.5, DistanceParams(10.0), include_main=False)
    # only assist: 4 - 0.5 * 0.5 * 1 * 4
    assert joint_distance(0, dmat, two_member_pool(), p) == pytest.approx(3.0)
    assert joint_distance(0, dmat, two_member_pool(), JointDistanceParams(0.9, DistanceParams(10.0),
                                                                          include_main=False)) \
        == pytest.approx(4 - 0.5 * 0.9 * 4)


def test_bad_eta():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            JointDistanceParams(bad)


def test_row_mismatch():
    with pytest.raises(ValueError):
        joint_distances(DistanceMatrix(np.ones((3, 2))), two_member_pool(), JointDistanceParams(0.5))


def test_random_against_reference(rng):
    for _ in range(50):
        m = 3
        pool = make_pool(list(rng.standard_normal((m, 6))))
        gal = random_gallery(rng, 20, 6)
        kappa = float(rng.choice([math.inf, 3.0, 4.0]))
        p = JointDistanceParams(float(rng.uniform(0.05, 1.0)), DistanceParams(kappa))
        d = pool_gallery_distances(pool, gal, p.distance)
        got = joint_distances(d, pool, p)
        for j in range(20):
            ref = joint_distance_reference(d.values[:, j], pool.weights, pool.main_index, p.eta_scale, kappa)
            assert abs(got[j] - ref) <= 1e-10 * max(1.0, abs(ref))


def test_single_entry_gallery():
    pool = make_pool([[0.0, 0.0], [1.0, 1.0]])
    rl = rank_by_joint_distance([entry(0, [5.0, 5.0])], pool, JointDistanceParams(0.5))
    assert list(rl.indices) == [0]


def test_tiny_eta_matches_baseline(rng):
    for _ in range(20):
        pool = make_pool([rng.standard_normal(8)])
        gal = random_gallery(rng, 30, 8)
        rl = rank_by_joint_distance(gal, pool, JointDistanceParams(1e-12))
        base = baseline_ranking(pool.main.entry.feature, gal, DistanceParams())
        assert rl.same_order(base)


def test_all_f_zero_is_baseline_order(rng):
    pool = make_pool(list(rng.standard_normal((3, 4))))
    gal = [entry(i, rng.standard_normal(4) + 50) for i in range(15)]
    p = JointDistanceParams(0.7, DistanceParams(kappa=1.0))
    rl = rank_by_joint_distance(gal, pool, p)
    base = baseline_ranking(pool.main.entry.feature, gal, DistanceParams())
    assert np.array_equal(rl.indices, base.indices)


def test_hand_set_distances_brute_force():
    d = np.array([[3.0, 1.0, 2.0, 5.0, 4.0],
                  [0.5, 4.0, 2.0, 1.0, 3.0],
                  [2.0, 2.0, 9.0, 0.2, 1.0]])
    pool = make_pool([[0.0], [1.0], [2.0]])
    p = JointDistanceParams(0.8, DistanceParams(6.0))
    scores = joint_distances(DistanceMatrix(d), pool, p)
    ref = [joint_distance_reference(d[:, j], pool.weights, 0, 0.8, 6.0) for j in range(5)]
    assert list(np.argsort(scores, kind="stable")) == sorted(range(5), key=lambda j: (ref[j], j))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_score_never_exceeds_main_distance(seed, eta):
    rng = np.random.default_rng(seed)
    pool = make_pool(list(rng.standard_normal((3, 5))))
    gal = random_gallery(rng, 12, 5)
    d = pool_gallery_distances(pool, gal, DistanceParams())
    s = joint_distances(d, pool, JointDistanceParams(eta))
    assert np.all(s <= d.values[pool.main_index])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_gallery_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    pool = make_pool(list(rng.standard_normal((3, 4))))
    gal = random_gallery(rng, 15, 4)
    perm = rng.permutation(15)
    p = JointDistanceParams(0.5)
    a = rank_by_joint_distance(gal, pool, p)
    b = rank_by_joint_distance([gal[i] for i in perm], pool, p)
    # map permuted indices back to original ids; distinct random scores so no ties
    assert [gal[i].image_id for i in a.indices] == [gal[perm[i]].image_id for i in b.indices]
