import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    align_to_z,
    bounce_via_transform,
    random_contacts,
    random_states,
    rk4_integrate,
    rot_about_z,
)
from ttrl.physics import (
    BallState,
    EventKind,
    IntegrationDiverged,
    NoContactError,
    PhysicsParams,
    RacketPose,
    TableGeometry,
    ball_acceleration,
    racket_bounce,
    rk4_step,
    simulate_until_event,
    table_bounce,
)

G = 9.81
NO_AIR = PhysicsParams(k_drag=0.0, k_magnus=0.0)
finite = st.floats(-30, 30, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


# -- ball_acceleration -------------------------------------------------------


def test_acceleration_at_rest_is_gravity():
    a = ball_acceleration([0, 0, 0], [0, 0, 0])
    np.testing.assert_array_equal(a, [0.0, 0.0, -9.81])


def test_acceleration_pure_drag():
    a = ball_acceleration([1, 0, 0], [0, 0, 0], PhysicsParams(k_drag=0.14, k_magnus=0.0))
    np.testing.assert_allclose(a, [-0.14, 0.0, -9.81], atol=1e-15)


def test_acceleration_drag_plus_magnus():
    # w x v = (0,0,10) x (0,5,0) = (-50, 0, 0); drag = -0.14 * 5 * (0,5,0)
    a = ball_acceleration([0, 5, 0], [0, 0, 10], PhysicsParams(k_drag=0.14, k_magnus=0.01))
    np.testing.assert_allclose(a, [-0.5, -3.5, -9.81], atol=1e-14)


@given(vec3, vec3)
def test_drag_term_antiparallel_to_velocity(v, w):
    p = PhysicsParams()
    a = ball_acceleration(v, w, p)
    lhs = (a + [0, 0, p.gravity] - p.k_magnus * np.cross(w, v)) @ v
    rhs = -p.k_drag * np.linalg.norm(v) ** 3
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@given(vec3, vec3, vec3, st.floats(-3, 3))
def test_acceleration_linear_in_spin(v, w1, w2, c):
    p = PhysicsParams()
    a0 = ball_acceleration(v, np.zeros(3), p)
    lhs = ball_acceleration(v, w1 + c * w2, p) - a0
    rhs = (ball_acceleration(v, w1, p) - a0) + c * (ball_acceleration(v, w2, p) - a0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


# -- rk4_step ----------------------------------------------------------------


def test_zero_step_is_identity():
    s = BallState([1, 2, 3], [4, 5, 6], [7, 8, 9], 0.5)
    out = rk4_step(s, 0.0)
    np.testing.assert_array_equal(out.as_vector(), s.as_vector())
    assert out.time == s.time


def test_negative_step_rejected():
    with pytest.raises(ValueError):
        rk4_step(BallState([0, 0, 0], [1, 0, 0], [0, 0, 0]), -1e-3)


def test_drag_free_step_matches_parabola():
    p0, v0, t = np.array([0.2, -0.1, 0.3]), np.array([1.0, 0.0, 3.0]), 0.1
    out = rk4_step(BallState(p0, v0, [0, 40, 0]), t, NO_AIR)
    exact = p0 + v0 * t - np.array([0, 0, 0.5 * G * t * t])
    np.testing.assert_allclose(out.position, exact, atol=1e-12, rtol=0)
    np.testing.assert_allclose(out.velocity, v0 - [0, 0, G * t], atol=1e-12, rtol=0)
    np.testing.assert_array_equal(out.spin, [0, 40, 0])
    assert out.time == pytest.approx(0.1)


def test_self_convergence_order():
    params = PhysicsParams()
    h, t_end = 0.01, 0.48
    for s in random_states(10, 1):
        y4 = rk4_integrate(s, 4 * h, t_end, params).as_vector()
        y2 = rk4_integrate(s, 2 * h, t_end, params).as_vector()
        y1 = rk4_integrate(s, h, t_end, params).as_vector()
        order = math.log2(np.linalg.norm(y4 - y2) / np.linalg.norm(y2 - y1))
        assert order >= 3.9


def test_halving_step_cuts_error_sixteenfold():
    params = PhysicsParams()
    s = BallState([0, 0, 0.3], [-4.5, 0.4, 2.0], [5, -30, 10])
    ref = rk4_integrate(s, 0.04 / 64, 0.48, params).position
    e_coarse = np.linalg.norm(rk4_integrate(s, 0.04, 0.48, params).position - ref)
    e_fine = np.linalg.norm(rk4_integrate(s, 0.02, 0.48, params).position - ref)
    assert 13.0 < e_coarse / e_fine < 19.0


# -- bounces -----------------------------------------------------------------


def test_table_bounce_flips_vz_only():
    s = BallState([1.0, 0.1, 0.0], [2, 0, -3], [0, 50, 0], 0.3)
    out = table_bounce(s)
    np.testing.assert_array_equal(out.velocity, [2, 0, 3])
    np.testing.assert_array_equal(out.spin, [0, 50, 0])
    np.testing.assert_array_equal(out.position, s.position)


@given(vec3)
def test_table_bounce_preserves_speed(v):
    if v[2] >= 0:
        v = v * [1, 1, -1] - [0, 0, 1e-3]
    s = BallState([1, 0, 0], v, [0, 0, 0])
    out = table_bounce(s)
    assert np.linalg.norm(out.velocity) == pytest.approx(np.linalg.norm(v), rel=1e-15)


def test_table_bounce_rejects_bad_contact():
    with pytest.raises(NoContactError):
        table_bounce(BallState([1, 0, 0], [1, 0, 2], [0, 0, 0]))
    with pytest.raises(NoContactError):
        table_bounce(BallState([1, 0, 0.2], [1, 0, -2], [0, 0, 0]))


def test_racket_bounce_head_on():
    r = RacketPose([1, 0, 0], [1, 0, 0])
    np.testing.assert_allclose(racket_bounce([-5, 0, 0], r), [7, 0, 0], atol=1e-15)


def test_racket_bounce_stationary_wall_reflects():
    r = RacketPose([1, 0, 0], [0, 0, 0])
    np.testing.assert_allclose(racket_bounce([-5, 0, 0], r), [5, 0, 0], atol=1e-15)


def test_racket_bounce_oblique_keeps_tangential():
    r = RacketPose([1, 0, 0], [0.5, 0, 0])
    np.testing.assert_allclose(racket_bounce([-5, 2, -1], r), [6, 2, -1], atol=1e-15)


def test_racket_bounce_requires_approach():
    with pytest.raises(NoContactError):
        racket_bounce([1, 0, 0], RacketPose([1, 0, 0], [0, 0, 0]))


def test_racket_normal_must_be_unit():
    with pytest.raises(ValueError):
        RacketPose([1, 1, 0], [0, 0, 0])


def test_racket_bounce_matches_transform_formulation():
    for nrm, vb, vr in random_contacts(100, 2):
        got = racket_bounce(vb, RacketPose(nrm, vr))
        want = bounce_via_transform(vb, vr, align_to_z(nrm))
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


def test_racket_bounce_independent_of_aligning_rotation():
    rng = np.random.default_rng(3)
    for nrm, vb, vr in random_contacts(10, 4):
        base = racket_bounce(vb, RacketPose(nrm, vr))
        for _ in range(10):
            T = rot_about_z(rng.uniform(0, 2 * np.pi)) @ align_to_z(nrm)
            np.testing.assert_allclose(T @ nrm, [0, 0, 1], atol=1e-12)
            np.testing.assert_allclose(bounce_via_transform(vb, vr, T), base, atol=1e-9, rtol=0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 8))
def test_racket_bounce_preserves_speed_for_still_racket(ny, nz, speed):
    nrm = np.array([1.0, ny, nz]) / np.linalg.norm([1.0, ny, nz])
    vb = -speed * nrm + np.array([0, 0.3, -0.2])
    if vb @ nrm >= 0:
        return
    out = racket_bounce(vb, RacketPose(nrm, [0, 0, 0]))
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(vb), rel=1e-13)


# -- simulate_until_event ----------------------------------------------------


def test_drop_onto_table_matches_closed_form():
    s = BallState([1.0, 0.0, 0.3], [0, 0, -1], [0, 0, 0])
    ev = simulate_until_event(s, TableGeometry(), NO_AIR)
    assert ev.kind is EventKind.TABLE_BOUNCE
    t_exact = (-1.0 + math.sqrt(1.0 + 2 * G * 0.3)) / G
    assert ev.state_at_event.time == pytest.approx(t_exact, abs=1e-6)
    assert abs(ev.state_at_event.position[2]) <= 1e-6


def test_ball_flying_away_times_out():
    s = BallState([5.0, 0.0, 1.0], [1, 0, 0], [0, 0, 0])
    ev = simulate_until_event(s, TableGeometry(), PhysicsParams(), max_time=0.2)
    assert ev.kind is EventKind.TIMEOUT
    assert ev.state_at_event.time == pytest.approx(0.2)


def test_serve_bounces_then_reaches_hitting_plane():
    geo = TableGeometry(hit_plane_x=0.3)
    s = BallState([2.6, 0.0, 0.3], [-4.75, 0.0, 1.75], [0, 0, 0])
    first = simulate_until_event(s, geo)
    assert first.kind is EventKind.TABLE_BOUNCE
    assert geo.hit_plane_x < first.state_at_event.position[0] < geo.net_x
    second = simulate_until_event(table_bounce(first.state_at_event), geo)
    assert second.kind is EventKind.HIT_PLANE
    assert second.state_at_event.time > first.state_at_event.time
    assert abs(second.state_at_event.position[0] - 0.3) <= 1e-6


def test_low_ball_hits_net():
    s = BallState([2.0, 0.0, 0.1], [-6, 0, 0.3], [0, 0, 0])
    ev = simulate_until_event(s)
    assert ev.kind is EventKind.NET_CONTACT
    assert abs(ev.state_at_event.position[0] - 1.37) <= 1e-6
    assert 0 < ev.state_at_event.position[2] < 0.1525


def test_ball_off_the_side_reaches_floor():
    s = BallState([1.0, 0.9, 0.2], [0.5, 0.5, 0.0], [0, 0, 0])
    ev = simulate_until_event(s)
    assert ev.kind is EventKind.FLOOR
    assert abs(ev.state_at_event.position[2] + 0.76) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(
    st.floats(1.6, 2.7), st.floats(-0.5, 0.5), st.floats(0.05, 0.5),
    st.floats(-7, -2), st.floats(-1, 1), st.floats(-1, 3), st.floats(-50, 50),
)
def test_event_states_satisfy_their_predicate(x, y, z, vx, vy, vz, wy):
    geo = TableGeometry(hit_plane_x=0.3)
    s = BallState([x, y, z], [vx, vy, vz], [0, wy, 0])
    ev = simulate_until_event(s, geo)
    p = ev.state_at_event.position
    if ev.kind is EventKind.TABLE_BOUNCE:
        assert abs(p[2]) <= 1e-6 and geo.on_table(p[0], p[1])
    elif ev.kind is EventKind.NET_CONTACT:
        assert abs(p[0] - geo.net_x) <= 1e-6 and 0 < p[2] < geo.net_height
    elif ev.kind is EventKind.HIT_PLANE:
        assert abs(p[0] - geo.hit_plane_x) <= 1e-6
    elif ev.kind is EventKind.FLOOR:
        assert abs(p[2] - geo.floor_z) <= 1e-6


def test_recorded_path_ends_at_event():
    s = BallState([2.6, 0.0, 0.3], [-4.75, 0.0, 1.75], [0, 10, 0], time=1.0)
    ev = simulate_until_event(s, record=True)
    path = ev.samples
    assert path[0, 0] == 1.0
    assert np.all(np.diff(path[:, 0]) > 0)
    np.testing.assert_allclose(path[-1, 1:], ev.state_at_event.position)
    assert path[-1, 0] == pytest.approx(ev.state_at_event.time)


def test_recorded_path_agrees_with_rk4_step():
    s = BallState([2.6, 0.1, 0.3], [-4.5, -0.2, 1.5], [0, 25, 0])
    ev = simulate_until_event(s, record=True)
    ref = s
    for row in ev.samples[1:20]:
        ref = rk4_step(ref, 1e-3)
        np.testing.assert_allclose(row[1:], ref.position, atol=1e-12)


def test_divergence_is_reported():
    s = BallState([1.0, 0.0, 0.5], [1e160, 0, 0], [0, 0, 0])
    with pytest.raises(IntegrationDiverged):
        simulate_until_event(s)


def test_invalid_step_rejected():
    with pytest.raises(ValueError):
        simulate_until_event(BallState([1, 0, 1], [0, 0, 0], [0, 0, 0]), dt=0.0)


def test_physics_params_validated():
    with pytest.raises(ValueError):
        PhysicsParams(k_drag=-1.0)
    with pytest.raises(ValueError):
        PhysicsParams(gravity=0.0)
