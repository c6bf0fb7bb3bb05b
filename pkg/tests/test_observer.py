import numpy as np
import pytest
from scipy.linalg import expm

from models import (
    CameraExtrinsics,
    GroupElement,
    ImuSample,
    LandmarkObservation,
    Modality,
    ObserverConfig,
    ObserverState,
    RigidBodyState,
    Rotation,
)
from services.dynamics import integrate_step, to_group
from services.liegroup import angle_axis, skew
from services.measurements import assemble, measure
from services.observer import (
    ObserverService,
    StiffnessMonitor,
    build_A,
    compute_error_diagnostics,
    consistent_estimate,
    extract_gains,
    init_landmark,
    initial_gravity_estimate,
    predict,
    release_landmark,
    sigma_R,
    update_with_gains,
)
from services.riccati import gain_L
from tests.helpers import GRAVITY, random_extrinsics, random_rotation, random_state


def _service(modality=Modality.RELATIVE_POSITION, extrinsics=(), **config):
    return ObserverService(ObserverConfig(**config), modality, extrinsics, GRAVITY)


def _tracking_state(service, xhat):
    """所有路标已初始化的观测器状态"""
    os = service.create_state(xhat)
    return ObserverState(os.xhat, os.riccati, os.k_r, os.g_true, np.ones(xhat.n, dtype=bool), os.t)


def test_build_A_blocks():
    w = np.array([0.1, -0.2, 0.3])
    a = build_A(w, 2)
    assert a.shape == (12, 12)
    for b in range(4):
        np.testing.assert_array_equal(a[3 * b:3 * b + 3, 3 * b:3 * b + 3], -skew(w))
    np.testing.assert_array_equal(a[0:3, 3:6], np.eye(3))
    np.testing.assert_array_equal(a[6:9, 0:3], np.eye(3))
    np.testing.assert_array_equal(a[9:12, 0:3], np.eye(3))
    assert not np.any(a[3:6, 0:3])
    assert not np.any(a[6:12, 3:6])
    assert not np.any(a[6:9, 9:12])


def test_sigma_R_vanishes_at_true_gravity():
    np.testing.assert_array_equal(sigma_R(GRAVITY, GRAVITY), np.zeros(3))


def test_error_state_follows_linear_dynamics(rng):
    """无测量时 x(t) = exp(At)x(0)，与姿态新息无关"""
    imu = ImuSample([0.3, -0.5, 0.8], [0.4, 1.0, 9.5])
    truth = random_state(rng, 2)
    other = random_state(rng, 2)
    xhat = GroupElement(random_rotation(rng), other.p, other.v, random_rotation(rng) @ GRAVITY, other.landmarks)
    os = _service().create_state(xhat)
    x0 = compute_error_diagnostics(truth, os).x
    dt, steps = 0.01, 100
    for _ in range(steps):
        truth = integrate_step(truth, imu, dt)
        os = predict(os, imu, dt)
    x1 = compute_error_diagnostics(truth, os).x
    np.testing.assert_allclose(x1, expm(build_A(imu.omega_b, 2) * dt * steps) @ x0, atol=1e-9)


def test_extract_gains_layout(rng):
    l = rng.normal(size=(12, 6))
    rhat = random_rotation(rng)
    gains = extract_gains(l, rhat, 2)
    stacked = np.vstack([gains.k_v, gains.k_g, -gains.gamma])
    np.testing.assert_allclose(np.kron(np.eye(4), rhat.m.T) @ stacked, l, atol=1e-12)
    assert not np.any(gains.k_p)
    with pytest.raises(ValueError):
        extract_gains(l, rhat, 3)


@pytest.mark.parametrize("modality", list(Modality))
def test_update_is_linear_in_error_state(rng, modality):
    """离散更新后 x⁺ = (I − LC)x，且 σ^p = Cx"""
    cams = (random_extrinsics(rng), random_extrinsics(rng))
    truth = random_state(rng, 3)
    guess = random_state(rng, 3, spread=1.0)
    xhat = GroupElement(random_rotation(rng), truth.p + guess.p, truth.v + guess.v, truth.g + 0.1 * guess.v,
                        truth.landmarks + guess.landmarks)
    service = _service(modality, cams)
    os = _tracking_state(service, xhat)
    obs = [measure(truth, i, modality, cams) for i in range(3)]
    x0 = compute_error_diagnostics(truth, os).x
    _, out = assemble(obs, os.xhat, cams)
    l = gain_L(os.riccati, out)

    updated, gains = update_with_gains(os, obs, cams)
    np.testing.assert_allclose(gains.sigma_p, out.c @ x0, atol=1e-9)
    x1 = compute_error_diagnostics(truth, updated).x
    np.testing.assert_allclose(x1, x0 - l @ (out.c @ x0), atol=1e-9)
    np.testing.assert_array_equal(updated.xhat.rot.m, os.xhat.rot.m)
    np.testing.assert_array_equal(updated.xhat.x1, os.xhat.x1)


def test_perfect_estimate_stays_perfect():
    truth = RigidBodyState(Rotation.identity(), [3.0, 0.0, 0.0], [0.0, 1.0, 0.0], GRAVITY,
                           np.array([[6.0, 0.0, -6.0], [1.0, 6.0, 2.0], [0.5, -1.0, 1.5]]))
    service = _service()
    os = _tracking_state(service, to_group(truth))
    dt = 0.005
    for k in range(200):
        t = k * dt
        imu = ImuSample([0.02 * np.sin(t), 0.01, 0.33], [0.1 * np.cos(t), -0.2, 9.81])
        truth = integrate_step(truth, imu, dt)
        os = predict(os, imu, dt)
        if (k + 1) % 10 == 0:
            os, _ = update_with_gains(os, [measure(truth, i, Modality.RELATIVE_POSITION) for i in range(3)])
    np.testing.assert_array_equal(os.xhat.x1, truth.p)
    np.testing.assert_array_equal(os.xhat.x2, truth.v)
    np.testing.assert_array_equal(os.xhat.rot.m, truth.rot.m)
    np.testing.assert_array_equal(os.xhat.xl, truth.landmarks)


def _stationary_truth():
    return RigidBodyState(Rotation.identity(), [1.0, 2.0, 3.0], np.zeros(3), GRAVITY, np.array([[4.0], [0.0], [1.0]]))


def _run_attitude(r_hat, steps=200, dt=0.005):
    truth = _stationary_truth()
    imu = ImuSample(np.zeros(3), -GRAVITY)
    os = _service().create_state(consistent_estimate(truth, r_hat))
    for _ in range(steps):
        os = predict(os, imu, dt)
    return compute_error_diagnostics(truth, os)


def test_reduced_gravity_converges_from_random_attitudes(rng):
    count = 0
    while count < 100:
        r_hat = random_rotation(rng)
        breve0 = r_hat @ GRAVITY
        cos = -breve0 @ GRAVITY / (9.81 ** 2)
        if np.arccos(np.clip(cos, -1.0, 1.0)) < np.deg2rad(5.0):
            continue
        count += 1
        diag = _run_attitude(r_hat)
        assert np.linalg.norm(diag.breve_g - GRAVITY) < 1e-6
        assert np.linalg.norm(diag.x) < 1e-9


def test_prediction_conserves_gravity_estimate_norm(rng):
    imu = ImuSample([0.3, -0.5, 0.8], [0.4, 1.0, 9.5])
    for _ in range(5):
        other = random_state(rng, 2)
        d = rng.normal(size=3)
        g_hat = 9.81 * d / np.linalg.norm(d)
        xhat = GroupElement(random_rotation(rng), other.p, other.v, g_hat, other.landmarks)
        os = _service().create_state(xhat)
        for _ in range(500):
            os = predict(os, imu, 0.01)
            assert np.linalg.norm(os.xhat.x3) == pytest.approx(9.81, abs=1e-9)


def test_antipodal_equilibrium_is_fixed_but_unstable():
    flip = Rotation(np.diag([1.0, -1.0, -1.0]))
    diag = _run_attitude(flip)
    np.testing.assert_allclose(diag.breve_g, -GRAVITY, atol=1e-12)
    assert diag.lyap_l2 == pytest.approx(0.0, abs=1e-20)

    nudged = _run_attitude(flip @ angle_axis(1e-6, [1.0, 0.0, 0.0]))
    assert np.linalg.norm(nudged.breve_g - GRAVITY) < 1e-6


def test_diagnostics_for_exact_estimate(rng):
    truth = random_state(rng, 2)
    os = _service().create_state(to_group(truth))
    diag = compute_error_diagnostics(truth, os)
    np.testing.assert_allclose(diag.x, np.zeros(12), atol=1e-12)
    assert diag.lyap_vp == pytest.approx(0.0, abs=1e-20)
    assert diag.lyap_l1 == pytest.approx(0.0, abs=1e-20)
    assert diag.lyap_l2 == pytest.approx(2.0 * 9.81 ** 2)


def test_diagnostics_mask_zeroes_blocks(rng):
    truth = random_state(rng, 2)
    os = _service().create_state(to_group(random_state(rng, 2)))
    full = compute_error_diagnostics(truth, os).x
    masked = compute_error_diagnostics(truth, os, np.array([True, False])).x
    np.testing.assert_array_equal(masked[:9], full[:9])
    assert not np.any(masked[9:])


def test_consistent_estimate_has_zero_error(rng):
    truth = random_state(rng, 3)
    os = _service().create_state(consistent_estimate(truth, random_rotation(rng)))
    np.testing.assert_allclose(compute_error_diagnostics(truth, os).x, np.zeros(15), atol=1e-12)


def test_init_relative_position_landmark_is_exact(rng):
    truth = random_state(rng, 2)
    xhat = to_group(truth.with_landmarks(np.zeros((3, 2))))
    service = _service()
    os = service.init_landmark(service.create_state(xhat), measure(truth, 1, Modality.RELATIVE_POSITION))
    np.testing.assert_allclose(os.xhat.xl[:, 1], truth.landmarks[:, 1], atol=1e-12)
    np.testing.assert_array_equal(os.initialized, [False, True])
    with pytest.raises(ValueError):
        service.init_landmark(os, measure(truth, 1, Modality.RELATIVE_POSITION))
    with pytest.raises(ValueError):
        service.init_landmark(os, LandmarkObservation.invisible(0, Modality.RELATIVE_POSITION))


def test_init_mono_landmark_uses_assumed_depth(rng):
    truth = random_state(rng, 1)
    cam = random_extrinsics(rng)
    service = _service(Modality.MONO_BEARING, (cam,), assumed_depth=2.5)
    os = service.create_state(to_group(truth.with_landmarks(np.zeros((3, 1)))))
    obs = measure(truth, 0, Modality.MONO_BEARING, (cam,))
    os = service.init_landmark(os, obs)
    camera_center = truth.p + truth.rot @ cam.p_c
    offset = os.xhat.xl[:, 0] - camera_center
    assert np.linalg.norm(offset) == pytest.approx(2.5)
    true_dir = truth.landmarks[:, 0] - camera_center
    np.testing.assert_allclose(offset / 2.5, true_dir / np.linalg.norm(true_dir), atol=1e-9)


def test_init_stereo_landmark_triangulates():
    cams = (CameraExtrinsics.identity(), CameraExtrinsics(Rotation.identity(), [0.11, 0.0, 0.0]))
    truth = RigidBodyState(Rotation.identity(), np.zeros(3), np.zeros(3), GRAVITY, np.array([[0.3], [0.2], [5.0]]))
    os = _service(Modality.STEREO_BEARING, cams).create_state(to_group(truth.with_landmarks(np.zeros((3, 1)))))
    os = init_landmark(os, measure(truth, 0, Modality.STEREO_BEARING, cams), 3.0, cams)
    np.testing.assert_allclose(os.xhat.xl[:, 0], truth.landmarks[:, 0], atol=1e-9)


def test_release_landmark_resets_slot(rng):
    truth = random_state(rng, 2)
    service = _service(p0_sigma_l=2.0)
    os = _tracking_state(service, to_group(truth))
    os = release_landmark(os, 0, 2.0)
    np.testing.assert_array_equal(os.initialized, [False, True])
    np.testing.assert_array_equal(os.riccati.p[6:9, 6:9], 4.0 * np.eye(3))


def test_update_without_usable_observations_is_noop(rng):
    truth = random_state(rng, 1)
    service = _service()
    os = service.create_state(to_group(truth))
    out, gains = service.update(os, [measure(truth, 0, Modality.RELATIVE_POSITION)])
    assert gains is None and out is os


def test_create_state_requires_landmark_slot():
    with pytest.raises(ValueError):
        _service().create_state(to_group(_stationary_truth().with_landmarks(np.zeros((3, 0)))))


def test_observer_config_validation():
    with pytest.raises(ValueError):
        ObserverConfig(k_r=0.0)


def test_stationary_gravity_initialization(rng):
    r = random_rotation(rng)
    imu = ImuSample(np.zeros(3), r.m.T @ (-GRAVITY))
    np.testing.assert_allclose(initial_gravity_estimate(imu, r, True), GRAVITY, atol=1e-12)
    np.testing.assert_allclose(initial_gravity_estimate(imu, r, False), GRAVITY, atol=1e-12)


def test_stiffness_warning_is_per_monitor(caplog):
    monitor = StiffnessMonitor()
    with caplog.at_level("WARNING", logger="services.observer"):
        assert not monitor.check(0.1)
        assert monitor.check(0.8)
        assert monitor.check(0.9)
    assert monitor.warned
    assert len([r for r in caplog.records if "连续模式修正项" in r.getMessage()]) == 1

    a, b = _service(continuous=True), _service(continuous=True)
    assert a.stiffness is not b.stiffness
    a.stiffness.check(1.0)
    assert a.stiffness.warned and not b.stiffness.warned
