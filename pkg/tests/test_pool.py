import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolreid.metric import DistanceParams
from poolreid.pool import (CameraEvent, UpdateParams, apply_event, designate_second_main,
                           farthest_member, init_pool, replay, update_criterion)

from conftest import entry, make_pool

DP = DistanceParams()


def ev(i, vec, cam=0, confirmed=True):
    return CameraEvent(entry(i, vec, cam), confirmed)


def check_invariants(pool, cap):
    roles = [m.role for m in pool.members]
    assert roles.count("main") == 1
    assert abs(math.fsum(pool.weights) - 1) <= 1e-9
    assert 1 <= len(pool) <= cap


class TestInit:
    def test_single_frame(self):
        p = init_pool([entry(0, [1.0])], UpdateParams(1.0, capacity_M=3))
        assert len(p) == 1 and p.weights == (1.0,)

    def test_stride(self):
        track = [entry(i, [float(i)], frame=i) for i in range(10)]
        p = init_pool(track, UpdateParams(1.0, beta=3, capacity_M=3))
        assert [m.entry.frame_index for m in p.members] == [0, 3, 6]
        assert p.weights == (0.5, 0.25, 0.25)

    def test_stride_one(self):
        track = [entry(i, [float(i)], frame=i) for i in range(100)]
        p = init_pool(track, UpdateParams(1.0, capacity_M=3))
        assert [m.entry.frame_index for m in p.members] == [0, 1, 2]

    def test_errors(self):
        with pytest.raises(ValueError):
            init_pool([], UpdateParams(1.0))
        with pytest.raises(ValueError):
            init_pool([entry(0, [0.0], cam=0), entry(1, [1.0], cam=1)], UpdateParams(1.0))

    def test_params(self):
        for bad in (dict(gamma=0), dict(gamma=1, beta=0), dict(gamma=1, capacity_M=0),
                    dict(gamma=math.inf)):
            with pytest.raises(ValueError):
                UpdateParams(**bad)


class TestGate:
    def test_mean_passes(self):
        pool = make_pool([[1.0], [2.0], [3.0]])
        assert update_criterion(entry(0, [0.0]), pool, UpdateParams(1.5), DP) == (True, 2.0)

    def test_identical_rejected(self):
        pool = make_pool([[1.0, 1.0]] * 3)
        passes, mean = update_criterion(entry(0, [1.0, 1.0]), pool, UpdateParams(1e-9), DP)
        assert not passes and mean == 0.0

    def test_strict_boundary(self):
        pool = make_pool([[0.0, 0.0], [2.0, 0.0]])
        assert update_criterion(entry(0, [1.0, 0.0]), pool, UpdateParams(1.0), DP) == (False, 1.0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            update_criterion(entry(0, [1.0, 0.0]), make_pool([[0.0]]), UpdateParams(1.0), DP)

    @settings(max_examples=100)
    @given(st.integers(0, 10_000), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_monotone_in_gamma(self, seed, g1, g2):
        rng = np.random.default_rng(seed)
        pool = make_pool(list(rng.standard_normal((3, 4))))
        new = entry(0, rng.standard_normal(4) * 3)
        lo, hi = sorted([g1, g2])
        if not update_criterion(new, pool, UpdateParams(lo), DP)[0]:
            assert not update_criterion(new, pool, UpdateParams(hi), DP)[0]


class TestFarthest:
    def test_argmax(self):
        pool = make_pool([[0.5], [3.0], [1.0]])
        assert farthest_member(entry(0, [0.0]), pool, DP) == 1

    def test_tie_lowest_index(self):
        pool = make_pool([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        assert farthest_member(entry(0, [0.0, 0.0]), pool, DP) == 0

    def test_linear_scan(self, rng):
        for _ in range(50):
            pool = make_pool(list(rng.standard_normal((4, 3))))
            v = rng.standard_normal(3)
            d = [np.linalg.norm(v - m.entry.feature.astype(float)) for m in pool.members]
            best = 0
            for i in range(len(d)):
                if d[i] > d[best]:
                    best = i
            assert farthest_member(entry(0, v), pool, DP) == best


class TestSameCamera:
    def pool(self):
        return make_pool([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def test_replaces_farthest_assist(self):
        # distances from (5,0): main 5, #1 4, #2 sqrt(26) -> #2 evicted
        out, tr = apply_event(self.pool(), ev(1, [5.0, 0.0]), UpdateParams(1.0), DP)
        assert tr.action == "replaced_assist" and tr.branch == "same_camera"
        assert tr.evicted_image_id == "img102"
        assert out.image_ids == ("img100", "img101", "img1")
        assert out.weights == (0.5, 0.25, 0.25)
        assert tr.criterion_value == pytest.approx((5 + 4 + math.sqrt(26)) / 3)

    def test_main_never_evicted(self):
        # main is farthest overall but only assists are candidates
        pool = make_pool([[-9.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        out, tr = apply_event(pool, ev(1, [5.0, 0.0]), UpdateParams(1.0), DP)
        assert out.main.entry.image_id == "img100"
        assert tr.evicted_image_id == "img102"

    def test_gate_fail_unchanged(self):
        pool = self.pool()
        out, tr = apply_event(pool, ev(1, [0.3, 0.3]), UpdateParams(5.0), DP)
        assert out is pool and tr.action == "rejected_by_gate"

    def test_unconfirmed_ignored(self):
        pool = self.pool()
        out, tr = apply_event(pool, ev(1, [50.0, 0.0], confirmed=False), UpdateParams(1.0), DP)
        assert out is pool and tr.action == "ignored_unconfirmed" and not tr.accepted

    def test_below_capacity_appends(self):
        pool = make_pool([[0.0, 0.0], [1.0, 0.0]], capacity=3)
        out, tr = apply_event(pool, ev(1, [5.0, 5.0]), UpdateParams(1.0), DP)
        assert tr.action == "appended_assist"
        assert len(out) == 3 and out.weights == (0.5, 0.25, 0.25)

    def test_main_only_full_pool(self):
        pool = make_pool([[0.0]], capacity=1)
        out, tr = apply_event(pool, ev(1, [5.0]), UpdateParams(1.0), DP)
        assert out is pool and tr.action == "no_assist_slot"


class TestCrossCamera:
    def test_new_main_takes_over(self):
        pool = make_pool([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        # from (0,5) cam 1: main 5, #1 sqrt(26), #2 4 -> #1 evicted
        out, tr = apply_event(pool, ev(1, [0.0, 5.0], cam=1), UpdateParams(1.0), DP)
        assert tr.action == "replaced_main" and tr.branch == "cross_camera"
        assert tr.evicted_image_id == "img101" and tr.previous_main_id == "img100"
        roles = {m.entry.image_id: (m.role, m.weight) for m in out.members}
        assert roles == {"img1": ("main", 0.5), "img100": ("assist", 0.25),
                         "img102": ("assist", 0.25)}
        assert out.current_camera == 1

    def test_collision_removes_old_main(self):
        pool = make_pool([[0.0, 0.0], [4.0, 0.0], [4.0, 1.0]])
        out, tr = apply_event(pool, ev(1, [5.0, 0.0], cam=1), UpdateParams(1.0), DP)
        assert tr.evicted_image_id == "img100" == tr.previous_main_id
        assert "img100" not in out.image_ids
        assert out.main.entry.image_id == "img1"
        assert sorted(out.weights) == [0.25, 0.25, 0.5]

    def test_gate_fail_unchanged(self):
        pool = make_pool([[0.0, 0.0], [1.0, 0.0]])
        out, tr = apply_event(pool, ev(1, [0.5, 0.0], cam=2), UpdateParams(3.0), DP)
        assert out is pool and tr.action == "rejected_by_gate" and tr.branch == "cross_camera"

    def test_below_capacity(self):
        pool = make_pool([[0.0, 0.0], [1.0, 0.0]], capacity=3)
        out, tr = apply_event(pool, ev(1, [5.0, 5.0], cam=1), UpdateParams(1.0), DP)
        assert len(out) == 3 and out.main.entry.image_id == "img1"
        assert out.weights[out.main_index] == 0.5
        check_invariants(out, 3)

    def test_routing_uses_last_update_camera(self):
        pool = make_pool([[0.0, 0.0], [1.0, 0.0]])
        pool, _ = apply_event(pool, ev(1, [9.0, 9.0], cam=1), UpdateParams(1.0), DP)
        _, tr = apply_event(pool, ev(2, [-9.0, 9.0], cam=1), UpdateParams(1.0), DP)
        assert tr.branch == "same_camera"

    def test_second_main_inherited_role(self):
        pool = designate_second_main(make_pool([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                                                [1.0, 1.0]]), 3)
        assert pool.weights == (0.5, 0.125, 0.125, 0.25)
        out, tr = apply_event(pool, ev(1, [-3.0, -3.0], cam=1), UpdateParams(1.0), DP)
        # farthest from (-3,-3) is the second main (1,1); old main inherits its slot
        assert tr.evicted_image_id == "img103"
        check_invariants(out, 4)
        assert out.members[out.second_main_index].entry.image_id == "img100"


def random_events(rng, n, dim=4, cams=3):
    out = []
    for i in range(n):
        cam = int(rng.integers(cams))
        scale = float(rng.choice([0.1, 1.0, 3.0]))
        out.append(CameraEvent(entry(1000 + i, rng.standard_normal(dim) * scale, cam),
                               bool(rng.random() > 0.05)))
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.floats(0.5, 3.0))
def test_state_machine_invariants(seed, cap, gamma):
    rng = np.random.default_rng(seed)
    track = [entry(i, rng.standard_normal(4), frame=i) for i in range(cap)]
    up = UpdateParams(gamma, capacity_M=cap)
    pool = init_pool(track[:1], up)
    for e in random_events(rng, 120):
        before_main = pool.main.entry.image_id
        new, tr = apply_event(pool, e, up, DP)
        check_invariants(new, cap)
        if tr.accepted and tr.branch == "cross_camera":
            assert new.main.entry.image_id != before_main
        if tr.branch == "same_camera":
            assert new.main.entry.image_id == before_main
        if not tr.accepted:
            assert new is pool
        assert tr.criterion_value >= 0
        pool = new


def test_replay_deterministic(rng):
    up = UpdateParams(1.0, capacity_M=3)
    pool = make_pool([[0.0] * 4, [1.0] * 4, [2.0] * 4])
    events = random_events(rng, 200)
    a, ta = replay(pool, events, up, DP)
    b, tb = replay(pool, events, up, DP)
    assert ta == tb
    assert a.image_ids == b.image_ids
    assert np.array_equal(np.array(a.weights), np.array(b.weights))
    assert np.array_equal(a.features(), b.features())
    assert {t.action for t in ta} >= {"rejected_by_gate", "replaced_main", "replaced_assist"}


def test_trace_line():
    pool = make_pool([[0.0], [1.0]])
    _, tr = apply_event(pool, ev(7, [9.0], cam=1), UpdateParams(1.0), DP)
    assert tr.to_line().split("\t")[:4] == ["replaced_main", "cross_camera", "img7", "1"]
