import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from papc.dynamics import (ControlInput, DynamicsError, Obstacle, Track, VehicleParams, VehicleState,
                           distance_to_obstacle, load_obstacles, load_track, oval_track, save_obstacles,
                           save_track, step_dynamics, straight_track, track_frame, wrap_angle)

P = VehicleParams()


def euler_oracle(state, control, dt, n=100_000, L=0.57):
    """Forward Euler with tiny substeps; no wrap, no clamp."""
    u, v, psi, s = state.pos_u, state.pos_v, state.heading, state.speed
    h = dt / n
    k = math.tan(control.steering) / L
    for _ in range(n):
        u, v, psi, s = (u + h * s * math.cos(psi), v + h * s * math.sin(psi),
                        psi + h * s * k, s + h * control.throttle)
    return u, v, psi, s


def test_rest_is_fixed_point():
    s0 = VehicleState(1.0, 2.0, 0.3, 0.0, 5.0)
    s1 = step_dynamics(s0, ControlInput(0.0, 0.0), 0.02)
    assert (s1.pos_u, s1.pos_v, s1.heading, s1.speed) == (1.0, 2.0, 0.3, 0.0)
    assert s1.timestamp == pytest.approx(5.02)


def test_straight_line_one_metre():
    s1 = step_dynamics(VehicleState(0.0, 0.0, 0.0, 1.0), ControlInput(), 1.0)
    assert s1.pos_u == 1.0 and s1.pos_v == 0.0


def test_matches_fine_euler():
    rng = np.random.default_rng(3)
    for _ in range(3):
        s0 = VehicleState(*rng.uniform(-5, 5, 2), rng.uniform(-3, 3), rng.uniform(0.5, 6))
        c = ControlInput(rng.uniform(-0.5, 0.5), rng.uniform(-4, 4))
        s1 = step_dynamics(s0, c, 0.02)
        u, v, psi, s = euler_oracle(s0, c, 0.02)
        assert abs(s1.pos_u - u) < 1e-6 and abs(s1.pos_v - v) < 1e-6
        assert abs(wrap_angle(s1.heading - psi)) < 1e-6 and abs(s1.speed - s) < 1e-6


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(dt=-0.1), dict(steer=0.6), dict(acc=5.0),
                                 dict(steer=math.nan), dict(speed=math.inf)])
def test_rejects_invalid(bad):
    s0 = VehicleState(0, 0, 0, bad.get("speed", 1.0))
    with pytest.raises(DynamicsError):
        step_dynamics(s0, ControlInput(bad.get("steer", 0.0), bad.get("acc", 0.0)), bad.get("dt", 0.02))


@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-10, 10), st.floats(0, 10),
       st.floats(-0.5, 0.5), st.floats(-4, 4))
def test_state_invariants(u, v, psi, s, steer, acc):
    s1 = step_dynamics(VehicleState(u, v, psi, s), ControlInput(steer, acc), 0.02)
    assert -math.pi < s1.heading <= math.pi
    assert s1.speed >= 0.0


@given(st.floats(-3, 3), st.floats(0, 10), st.floats(-0.5, 0.5))
def test_coasting_conserves_speed(psi, s, steer):
    s1 = step_dynamics(VehicleState(0, 0, psi, s), ControlInput(steer, 0.0), 0.02)
    assert s1.speed == s


def test_deterministic():
    s0, c = VehicleState(0.1, 0.2, 0.3, 2.0), ControlInput(0.1, 1.0)
    assert step_dynamics(s0, c, 0.02) == step_dynamics(s0, c, 0.02)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


# track geometry

def test_track_frame_first_waypoint():
    tr = oval_track()
    assert track_frame(tr, tr.centerline[0]) == (0.0, 0.0)


def test_lateral_left_positive():
    tr = straight_track()
    s, e = track_frame(tr, (10.0, 1.0))
    assert s == pytest.approx(10.0) and e == pytest.approx(1.0)
    assert track_frame(tr, (10.0, -0.5))[1] == pytest.approx(-0.5)


def test_waypoints_have_zero_offset():
    tr = oval_track()
    for p in tr.centerline:
        assert abs(track_frame(tr, p)[1]) < 1e-12


def dense_oracle(track, pos, per_metre=2000):
    pts = np.array(track.centerline + (track.centerline[0],))
    dense, arcs, acc = [], [], 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        L = np.linalg.norm(b - a)
        n = max(int(L * per_metre), 2)
        t = np.linspace(0, 1, n, endpoint=False)
        dense.append(a + t[:, None] * (b - a))
        arcs.append(acc + t * L)
        acc += L
    dense, arcs = np.vstack(dense), np.concatenate(arcs)
    d = np.linalg.norm(dense - pos, axis=1)
    i = np.argmin(d)
    return arcs[i], d[i]


def test_track_frame_matches_dense_sampling():
    tr = oval_track()
    rng = np.random.default_rng(0)
    for _ in range(100):
        s_true = rng.uniform(0, tr.total_length)
        p, t = tr.point_at(s_true)
        pos = p + rng.uniform(-1.4, 1.4) * np.array([-t[1], t[0]])
        s, e = track_frame(tr, pos)
        s_ref, d_ref = dense_oracle(tr, pos)
        assert abs(abs(e) - d_ref) < 1e-3
        gap = abs(s - s_ref)
        assert min(gap, tr.total_length - gap) < 1e-3


@given(st.floats(0, 200), st.floats(-1.4, 1.4))
def test_arc_length_range(s, lat):
    tr = oval_track()
    p, t = tr.point_at(s)
    arc, _ = track_frame(tr, p + lat * np.array([-t[1], t[0]]))
    assert 0.0 <= arc < tr.total_length


def test_track_validation():
    with pytest.raises(ValueError):
        Track(((0, 0), (1, 0), (2, 0)), 1.0)
    with pytest.raises(ValueError):
        Track(((0, 0), (1, 0), (1, 0), (2, 0)), 1.0)
    with pytest.raises(ValueError):
        Track(((0, 0), (1, 0), (2, 0), (3, 0)), 0.0, closed=False)


def test_track_and_obstacle_json_round_trip(tmp_path):
    tr = oval_track()
    save_track(tr, tmp_path / "t.json")
    assert load_track(tmp_path / "t.json") == tr
    obs = [Obstacle((1.0, 2.0), (0.2, 0.3), 0.5, (200, 0, 0), name="a")]
    save_obstacles(obs, tmp_path / "o.json")
    assert load_obstacles(tmp_path / "o.json") == obs


# obstacles

def test_distance_inside_is_zero():
    ob = Obstacle((3.0, 4.0), (0.5, 0.2), 1.0, (255, 0, 0))
    assert distance_to_obstacle(VehicleState(3.0, 4.0, 0, 0), ob) == 0.0


def test_distance_point_like():
    ob = Obstacle((5.0, 0.0), (1e-9, 1e-9), 1.0, (255, 0, 0))
    assert distance_to_obstacle(VehicleState(0, 0, 0, 0), ob) == pytest.approx(5.0, abs=1e-8)


def test_distance_matches_boundary_sampling():
    rng = np.random.default_rng(1)
    for _ in range(50):
        ob = Obstacle(tuple(rng.uniform(-2, 2, 2)), tuple(rng.uniform(0.1, 1.0, 2)), 1.0, (255, 0, 0))
        p = rng.uniform(-5, 5, 2)
        (cu, cv), (hu, hv) = ob.center, ob.footprint
        t = np.linspace(-1, 1, 20001)
        edges = np.vstack([np.c_[cu + hu * t, np.full_like(t, cv - hv)], np.c_[cu + hu * t, np.full_like(t, cv + hv)],
                           np.c_[np.full_like(t, cu - hu), cv + hv * t], np.c_[np.full_like(t, cu + hu), cv + hv * t]])
        inside = abs(p[0] - cu) <= hu and abs(p[1] - cv) <= hv
        ref = 0.0 if inside else np.linalg.norm(edges - p, axis=1).min()
        assert abs(distance_to_obstacle(VehicleState(*p, 0, 0), ob) - ref) < 1e-3


def test_obstacle_footprint_positive():
    with pytest.raises(ValueError):
        Obstacle((0, 0), (0.0, 1.0), 1.0, (0, 0, 0))
