import numpy as np
import pytest

from models import ImuSample, RigidBodyState, Rotation, ScenarioConfig
from services.dynamics import (
    build_group_velocity,
    build_structure,
    derivative_component,
    derivative_group,
    from_group,
    integrate_step,
    to_group,
)
from services.simulation import CircularTrajectory
from tests.helpers import GRAVITY, random_state


def test_group_and_component_derivatives_agree(rng):
    for _ in range(1000):
        n = int(rng.integers(0, 6))
        s = random_state(rng, n)
        imu = ImuSample(rng.normal(size=3), rng.normal(scale=5.0, size=3))
        group = derivative_group(to_group(s), build_group_velocity(imu, n), build_structure(n))
        np.testing.assert_allclose(group, derivative_component(s, imu).embed(), atol=1e-12)


def test_derivative_group_checks_dimensions(rng):
    s = random_state(rng, 2)
    imu = ImuSample(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        derivative_group(to_group(s), build_group_velocity(imu, 3), build_structure(2))


def test_structure_shift():
    sc = build_structure(2)
    assert sc.h.shape == (8, 8)
    assert sc.s[1, 0] == 1.0 and sc.s[2, 1] == 1.0
    assert np.count_nonzero(sc.h) == 2


def test_group_round_trip(rng):
    s = random_state(rng, 3)
    back = from_group(to_group(s))
    np.testing.assert_array_equal(back.landmarks, s.landmarks)
    np.testing.assert_array_equal(back.v, s.v)


def test_integrate_step_rejects_bad_dt(rng):
    with pytest.raises(ValueError):
        integrate_step(random_state(rng, 0), ImuSample(np.zeros(3), np.zeros(3)), 0.0)


def test_constant_acceleration_is_exact():
    s = RigidBodyState(Rotation.identity(), [1.0, 2.0, 3.0], [0.5, -0.5, 0.0], GRAVITY)
    a = np.array([0.3, -0.1, 9.0])
    dt = 0.1
    out = integrate_step(s, ImuSample(np.zeros(3), a), dt)
    acc = GRAVITY + a
    np.testing.assert_allclose(out.p, s.p + dt * s.v + 0.5 * dt * dt * acc, atol=1e-12)
    np.testing.assert_allclose(out.v, s.v + dt * acc, atol=1e-12)
    np.testing.assert_array_equal(out.rot.m, np.eye(3))
    assert out.t == pytest.approx(dt)


def test_landmarks_and_gravity_pass_through(rng):
    s = random_state(rng, 4)
    out = integrate_step(s, ImuSample(rng.normal(size=3), rng.normal(size=3)), 0.01)
    np.testing.assert_array_equal(out.landmarks, s.landmarks)
    np.testing.assert_array_equal(out.g, s.g)


def test_first_order_hold_with_equal_samples_matches_zero_order_hold(rng):
    s = random_state(rng, 0)
    imu = ImuSample(rng.normal(size=3), rng.normal(size=3))
    a = integrate_step(s, imu, 0.005)
    b = integrate_step(s, imu, 0.005, imu)
    np.testing.assert_allclose(a.p, b.p, atol=1e-14)
    np.testing.assert_allclose(a.v, b.v, atol=1e-14)
    np.testing.assert_allclose(a.rot.m, b.rot.m, atol=1e-14)


def _propagate(s, imu, dt, horizon):
    for _ in range(int(round(horizon / dt))):
        s = integrate_step(s, imu, dt)
    return s


def test_integrator_is_fourth_order():
    s = RigidBodyState(Rotation.identity(), np.zeros(3), [1.0, 0.0, 0.0], GRAVITY)
    imu = ImuSample([0.5, -1.0, 2.8], [1.0, 2.0, 9.0])
    ref = _propagate(s, imu, 1e-5, 0.2)
    coarse = np.linalg.norm(_propagate(s, imu, 0.04, 0.2).p - ref.p)
    fine = np.linalg.norm(_propagate(s, imu, 0.02, 0.2).p - ref.p)
    assert coarse / fine >= 8.0


def test_synthetic_imu_reproduces_trajectory():
    traj = CircularTrajectory(ScenarioConfig())
    dt = 1.0 / 200.0
    s = traj.state_at(0.0)
    imu = traj.imu_at(0.0)
    for k in range(2000):
        nxt = traj.imu_at((k + 1) * dt)
        s = integrate_step(s, imu, dt, nxt)
        imu = nxt
    truth = traj.state_at(10.0)
    assert np.linalg.norm(s.p - truth.p) < 1e-3
    assert np.linalg.norm(s.v - truth.v) < 1e-3


def _integrate_synthetic(traj, rate, horizon):
    dt = 1.0 / rate
    s = traj.state_at(0.0)
    imu = traj.imu_at(0.0)
    for k in range(int(round(horizon * rate))):
        nxt = traj.imu_at((k + 1) * dt)
        s = integrate_step(s, imu, dt, nxt)
        imu = nxt
    return s


@pytest.mark.slow
def test_synthetic_imu_reproduces_trajectory_over_50_seconds():
    """两级步长的 Richardson 外推消去二阶全局误差，50 s 末位置误差 < 1e-6 m"""
    traj = CircularTrajectory(ScenarioConfig())
    coarse = _integrate_synthetic(traj, 2000.0, 50.0)
    fine = _integrate_synthetic(traj, 4000.0, 50.0)
    truth = traj.state_at(50.0)
    extrapolated = (4.0 * fine.p - coarse.p) / 3.0
    assert np.linalg.norm(extrapolated - truth.p) < 1e-6
    assert np.linalg.norm(fine.p - truth.p) <= np.linalg.norm(coarse.p - truth.p) + 1e-9
