import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from papc.dynamics import VehicleParams, VehicleState, oval_track, track_frame
from papc.mpc import (LinearQuadraticProblem, OcpSpec, SolverError, VehicleProblem, ilqg, receding_horizon,
                      rollout, shift, solve_ilqg)

from oracles import double_integrator, riccati_lqr

TRACK = oval_track()


def test_lqr_matches_riccati():
    A, B, Q, R, Qf = double_integrator()
    x0 = np.array([1.0, -0.5])
    X_ref, U_ref = riccati_lqr(A, B, Q, R, Qf, x0, 30)
    plan = ilqg(LinearQuadraticProblem(A, B, Q, R, Qf), x0, np.zeros((30, 1)), reg_init=0.0, tol=1e-12)
    assert np.max(np.abs(plan.controls - U_ref)) < 1e-6
    assert np.max(np.abs(plan.states - X_ref)) < 1e-6


def test_converges_on_centerline():
    plan = solve_ilqg(OcpSpec(), VehicleState(2.0, 0.0, 0.0, 5.0), TRACK)
    assert plan.converged
    assert plan.controls.shape == (50, 2) and plan.states.shape == (51, 4)
    assert np.all(np.abs(plan.controls[:, 0]) <= 0.5)


def test_offset_start_steers_back():
    plan = solve_ilqg(OcpSpec(), VehicleState(2.0, 1.0, 0.0, 5.0), TRACK)
    assert plan.controls[0, 0] < 0  # right of travel is negative steering
    e_end = track_frame(TRACK, plan.states[-1, :2])[1]
    assert abs(e_end) < 1.0


def test_warm_start_and_shift():
    spec = OcpSpec()
    plan = solve_ilqg(spec, VehicleState(2.0, 0.3, 0.0, 5.0), TRACK)
    sh = shift(plan)
    assert np.array_equal(sh.controls[:-1], plan.controls[1:])
    warm = solve_ilqg(spec, VehicleState(*plan.states[1]), TRACK, sh)
    assert warm.iterations <= plan.iterations


def test_rollout_reproduces_states():
    spec = OcpSpec()
    plan = solve_ilqg(spec, VehicleState(2.0, 0.3, 0.1, 4.0), TRACK)
    X = rollout(VehicleProblem(spec, TRACK), plan.states[0], plan.controls)
    assert np.array_equal(X, plan.states)


@given(st.floats(-1.2, 1.2), st.floats(-0.4, 0.4), st.floats(1.0, 7.0), st.floats(0, 80))
def test_cost_history_non_increasing(lat, dpsi, speed, s):
    p, t = TRACK.point_at(s)
    pos = p + lat * np.array([-t[1], t[0]])
    x0 = VehicleState(*pos, math.atan2(t[1], t[0]) + dpsi, speed)
    plan = solve_ilqg(OcpSpec(horizon_steps=20), x0, TRACK)
    h = np.array(plan.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert plan.cost == h[-1]


def test_invalid_spec():
    with pytest.raises(ValueError):
        OcpSpec(horizon_steps=1)
    with pytest.raises(ValueError):
        OcpSpec(w_center=-1)


def test_non_finite_start_rejected():
    with pytest.raises(SolverError):
        solve_ilqg(OcpSpec(), VehicleState(math.nan, 0, 0, 1), TRACK)


def test_receding_horizon_tracks_centerline():
    steps = receding_horizon(OcpSpec(), VehicleState(0.0, 0.5, 0.0, 5.0), TRACK, 100)
    assert len(steps) == 100
    lat = [abs(track_frame(TRACK, (s.state.pos_u, s.state.pos_v))[1]) for s in steps]
    assert max(lat) < TRACK.half_width and lat[-1] < 0.1
    assert steps[-1].state.speed == pytest.approx(5.0, abs=0.2)


def test_perturbation_changes_applied_only():
    clean = receding_horizon(OcpSpec(), VehicleState(0.0, 0.0, 0.0, 5.0), TRACK, 3)
    noisy = receding_horizon(OcpSpec(), VehicleState(0.0, 0.0, 0.0, 5.0), TRACK, 3,
                             perturb=lambda i, u: type(u)(u.steering + 0.1, u.throttle))
    assert noisy[0].control == clean[0].control
    assert noisy[0].applied.steering == pytest.approx(clean[0].control.steering + 0.1)


def test_applied_control_is_clipped():
    steps = receding_horizon(OcpSpec(), VehicleState(0.0, 0.0, 0.0, 5.0), TRACK, 2,
                             perturb=lambda i, u: type(u)(5.0, 50.0))
    p = VehicleParams()
    assert steps[0].applied.steering == p.steer_max and steps[0].applied.throttle == p.accel_max
