"""
圆周轨迹仿真：真值轨迹、墙面路标、可见性、传感器噪声、单次运行与蒙特卡洛统计
"""
import concurrent.futures
import logging
from os import cpu_count
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation as SciRotation

from config.settings import settings
from models import (
    CameraExtrinsics,
    GramianReport,
    GroupElement,
    ImuSample,
    LandmarkObservation,
    Modality,
    ObserverConfig,
    ObserverState,
    RigidBodyState,
    Rotation,
    ScenarioConfig,
    SingularMeasurementError,
)
from .liegroup import angle_axis, apply_gauge, exp_so3, rotation_angle
from .measurements import build_C, measure
from .observability import gramian_factorized, gramian_windows
from .observer import ObserverService, compute_error_diagnostics, initial_gravity_estimate
from .riccati import eigen_bounds

logger = logging.getLogger(__name__)

# EuRoC MAV 机体(IMU)系到 cam0 / cam1 的外参 T_BS（前三行）
EUROC_T_BS_CAM0 = np.array([
    [0.0148655429818, -0.999880929698, 0.00414029679422, -0.0216401454975],
    [0.999557249008, 0.0149672133247, 0.025715529948, -0.064676986768],
    [-0.0257744366974, 0.00375618835797, 0.999660727178, 0.00981073058949],
])
EUROC_T_BS_CAM1 = np.array([
    [0.0125552670891, -0.999755099723, 0.0182237714554, -0.0198435579556],
    [0.999598781151, 0.0130119051815, 0.0251588363115, 0.0453689425024],
    [-0.0253898008918, 0.0179005838253, 0.999517347078, 0.00786212447038],
])

# 前视安装：相机 z 轴沿机体 x 轴，相机 x 轴沿机体 −y，相机 y 轴沿机体 −z
FORWARD_MOUNT = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


def euroc_extrinsics() -> Tuple[CameraExtrinsics, CameraExtrinsics]:
    """EuRoC 数据集自带的双目外参"""
    return tuple(CameraExtrinsics(t[:, :3], t[:, 3]) for t in (EUROC_T_BS_CAM0, EUROC_T_BS_CAM1))


def rig_extrinsics(name: str) -> Tuple[CameraExtrinsics, CameraExtrinsics]:
    """仿真相机外参

    euroc_forward：cam0 位于机体原点前视，cam1 相对 cam0 的位姿取 EuRoC 的双目标定；
    identity：两相机与机体系重合（单元测试用，双目模态下基线为零）。
    """
    if name == "identity":
        return CameraExtrinsics.identity(), CameraExtrinsics.identity()
    if name != "euroc_forward":
        raise ValueError(f"未知相机外参配置: {name}")
    cam0, cam1 = euroc_extrinsics()
    r01 = cam0.r_c.m.T @ cam1.r_c.m
    p01 = cam0.r_c.m.T @ (cam1.p_c - cam0.p_c)
    return (
        CameraExtrinsics(FORWARD_MOUNT, np.zeros(3)),
        CameraExtrinsics(FORWARD_MOUNT @ r01, FORWARD_MOUNT @ p01),
    )


def default_scenario() -> ScenarioConfig:
    return ScenarioConfig()


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def gauge_axis(gravity: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(gravity))
    if nrm == 0.0:
        return np.array([0.0, 0.0, 1.0])
    return -gravity / nrm


class CircularTrajectory:
    """圆周 + 竖直正弦 + 横滚/俯仰振荡的解析轨迹

    位置、速度、加速度与角速度均为闭式解，合成 IMU 与轨迹严格一致。
    全局规范变换（绕重力轴偏航 + 平移）作用于真值，IMU 不受影响。
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.g = cfg.gravity_vector
        self.gauge_rotation = angle_axis(np.deg2rad(cfg.gauge_yaw_deg), gauge_axis(self.g))
        self.gauge_offset = np.asarray(cfg.gauge_offset, dtype=float)

    def _angles(self, t: float):
        cfg = self.cfg
        wr = 2.0 * np.pi * cfg.roll_freq
        wp = 2.0 * np.pi * cfg.pitch_freq
        ra = np.deg2rad(cfg.roll_amp)
        pa = np.deg2rad(cfg.pitch_amp)
        roll, roll_dot = ra * np.sin(wr * t), ra * wr * np.cos(wr * t)
        pitch, pitch_dot = pa * np.sin(wp * t), pa * wp * np.cos(wp * t)
        yaw_dot = cfg.v_forward / cfg.radius
        yaw = yaw_dot * t + 0.5 * np.pi
        return roll, pitch, yaw, roll_dot, pitch_dot, yaw_dot

    def _kinematics(self, t: float):
        """未施加规范变换的 (R, p, v, p̈, ω_b)"""
        cfg = self.cfg
        if cfg.stationary:
            z = np.zeros(3)
            return _rot_z(0.5 * np.pi), np.array([cfg.radius, 0.0, 0.0]), z, z, z
        r, v = cfg.radius, cfg.v_forward
        phi = v * t / r
        wv = 2.0 * np.pi * cfg.vert_freq
        p = np.array([r * np.cos(phi), r * np.sin(phi), cfg.vert_amp * np.sin(wv * t)])
        vel = np.array([-v * np.sin(phi), v * np.cos(phi), cfg.vert_amp * wv * np.cos(wv * t)])
        acc = np.array([
            -v * v / r * np.cos(phi),
            -v * v / r * np.sin(phi),
            -cfg.vert_amp * wv * wv * np.sin(wv * t),
        ])
        roll, pitch, yaw, roll_dot, pitch_dot, yaw_dot = self._angles(t)
        rot = _rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)
        sr, cr = np.sin(roll), np.cos(roll)
        sp, cp = np.sin(pitch), np.cos(pitch)
        omega = np.array([
            roll_dot - yaw_dot * sp,
            pitch_dot * cr + yaw_dot * cp * sr,
            -pitch_dot * sr + yaw_dot * cp * cr,
        ])
        return rot, p, vel, acc, omega

    def base_state(self, t: float) -> RigidBodyState:
        rot, p, v, _, _ = self._kinematics(t)
        return RigidBodyState(rot, p, v, self.g, t=t)

    def state_at(self, t: float) -> RigidBodyState:
        """施加规范变换后的真值状态（不含路标）"""
        rot, p, v, _, _ = self._kinematics(t)
        q = self.gauge_rotation
        return RigidBodyState(q @ Rotation(rot), q @ p + self.gauge_offset, q @ v, self.g, t=t)

    def imu_at(self, t: float) -> ImuSample:
        """无噪声 IMU：ω_b 与比力 a_b = Rᵀ(p̈ − g)"""
        rot, _, _, acc, omega = self._kinematics(t)
        return ImuSample(omega, rot.T @ (acc - self.g), t)

    def gauge_points(self, points: np.ndarray) -> np.ndarray:
        return self.gauge_rotation @ points + self.gauge_offset[:, None]


def generate_truth(cfg: ScenarioConfig, t: float) -> RigidBodyState:
    if not 0.0 <= t <= cfg.duration:
        raise ValueError(f"t = {t} 超出 [0, {cfg.duration}]")
    return CircularTrajectory(cfg).state_at(t)


def generate_landmarks(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """立方体墙面上均匀分布的路标（3×N，未施加规范变换）"""
    h = 0.5 * cfg.cube_side
    faces = 6 if cfg.include_floor_ceiling else 4
    n = cfg.n_world_landmarks
    face = rng.integers(0, faces, size=n)
    uv = rng.uniform(-h, h, size=(n, 2))
    pts = np.empty((n, 3))
    # 面编号：0/1 → x = ±h，2/3 → y = ±h，4/5 → z = ±h
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        others = [b for b in range(3) if b != a]
        sel = axis == a
        pts[sel, a] = sign[sel] * h
        pts[np.ix_(sel, others)] = uv[sel]
    return pts.T


def select_visible(
    state: RigidBodyState,
    landmarks: np.ndarray,
    cfg: ScenarioConfig,
    camera: CameraExtrinsics,
) -> np.ndarray:
    """视场锥内且位于相机前方的路标索引，按距离由近到远截断为 max_visible 个"""
    rel = state.rot.m.T @ (landmarks - state.p[:, None])
    d = camera.r_c.m.T @ (rel - camera.p_c[:, None])
    dist = np.linalg.norm(d, axis=0)
    if cfg.enforce_fov:
        half = np.deg2rad(0.5 * cfg.fov_deg)
        ok = (d[2] > 0.0) & (d[2] >= np.cos(half) * dist) & (dist > settings.CAMERA_EPS)
    else:
        ok = dist > settings.CAMERA_EPS
    idx = np.flatnonzero(ok)
    order = np.argsort(dist[idx], kind="stable")
    return idx[order][:cfg.max_visible]


def _perturb_ray(ray: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=3)
    axis = a - (a @ ray) * ray
    axis /= np.linalg.norm(axis)
    out = angle_axis(rng.normal(0.0, sigma), axis) @ ray
    return out / np.linalg.norm(out)


def corrupt(obs: LandmarkObservation, noise, rng: np.random.Generator) -> LandmarkObservation:
    """相对位置加高斯噪声；方位绕随机垂直轴旋转 N(0, σ²) 角度后归一化"""
    if not obs.visible:
        return obs
    if obs.modality is Modality.RELATIVE_POSITION:
        sigma = noise.effective_relpos_std
        if sigma == 0.0:
            return obs
        return LandmarkObservation(obs.landmark_id, obs.modality, y=obs.y + rng.normal(0.0, sigma, 3), t=obs.t)
    sigma = noise.effective_bearing_rad
    if sigma == 0.0:
        return obs
    y = _perturb_ray(obs.y, sigma, rng)
    y2 = _perturb_ray(obs.y2, sigma, rng) if obs.y2 is not None else None
    return LandmarkObservation(obs.landmark_id, obs.modality, y=y, y2=y2, t=obs.t)


class LandmarkTracker:
    """世界路标 → 观测器槽位的分配；离开视野的槽位在新路标出现时回收"""

    def __init__(self, slots: int):
        self.slot_world = np.full(slots, -1, dtype=int)

    def assign(self, visible: Sequence[int]) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
        """返回 (可见的 (槽位, 世界编号) 列表, 新分配槽位, 其中需先释放的槽位)"""
        visible = [int(w) for w in visible]
        current = {int(w): s for s, w in enumerate(self.slot_world) if w >= 0}
        wanted = set(visible)
        free = [s for s, w in enumerate(self.slot_world) if w < 0]
        stale = [s for s, w in enumerate(self.slot_world) if w >= 0 and int(w) not in wanted]
        pairs, fresh, recycled = [], [], []
        for w in visible:
            if w in current:
                pairs.append((current[w], w))
                continue
            if free:
                s = free.pop(0)
            elif stale:
                s = stale.pop(0)
                recycled.append(s)
            else:
                continue
            self.slot_world[s] = w
            pairs.append((s, w))
            fresh.append(s)
        return pairs, fresh, recycled

    @property
    def assigned(self) -> np.ndarray:
        return self.slot_world >= 0


@dataclass
class RunResult:
    """单次仿真的时间序列（相机时刻记录）"""
    modality: Modality
    seed: int
    times: np.ndarray
    truth_p: np.ndarray
    truth_q: np.ndarray
    truth_v: np.ndarray
    est_p: np.ndarray
    est_q: np.ndarray
    est_v: np.ndarray
    est_g: np.ndarray
    att_deg: np.ndarray
    pos_m: np.ndarray
    vel_err: np.ndarray
    grav_err: np.ndarray
    x_norm: np.ndarray
    x: np.ndarray
    sigma_p: np.ndarray
    lyap_vp: np.ndarray
    lyap_l1: np.ndarray
    p_min_eig: np.ndarray
    p_max_eig: np.ndarray
    visible_count: np.ndarray
    x_v: np.ndarray
    x_g: np.ndarray
    band_v: np.ndarray
    band_g: np.ndarray
    rotations: np.ndarray
    pi_blocks: np.ndarray
    wall_clock: float = 0.0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return self.times.size


def _wxyz(rot: np.ndarray) -> np.ndarray:
    q = SciRotation.from_matrix(rot).as_quat()
    return np.array([q[3], q[0], q[1], q[2]])


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=3)
    return a / np.linalg.norm(a)


def _initial_attitude(cfg: ScenarioConfig, r0: np.ndarray, rng: np.random.Generator) -> Rotation:
    init = cfg.initial
    if init.attitude_mode == "perturb":
        return Rotation(r0) @ exp_so3(np.deg2rad(init.attitude_deg) * _random_axis(rng))
    g = cfg.gravity_vector
    limit = np.deg2rad(init.antipode_exclusion_deg)
    while True:
        r_hat = SciRotation.random(random_state=rng).as_matrix()
        breve = (r0 @ r_hat.T).T @ g
        nrm = np.linalg.norm(g)
        if nrm == 0.0 or np.arccos(np.clip(-breve @ g / nrm ** 2, -1.0, 1.0)) > limit:
            return Rotation(r_hat)


def _initial_gravity(cfg: ScenarioConfig, r_hat: Rotation, imu0: ImuSample, rng: np.random.Generator) -> np.ndarray:
    init = cfg.initial
    g = cfg.gravity_vector
    mag = float(np.linalg.norm(g))
    if init.gravity_mode == "stationary":
        return initial_gravity_estimate(imu0, r_hat, True, mag)
    if init.gravity_mode == "random":
        limit = np.deg2rad(init.antipode_exclusion_deg)
        while True:
            d = _random_axis(rng)
            if mag == 0.0 or np.arccos(np.clip(-d @ g / mag, -1.0, 1.0)) > limit:
                return mag * d
    return g.copy()


def initial_estimate(
    cfg: ScenarioConfig,
    trajectory: CircularTrajectory,
    imu0: ImuSample,
    slots: int,
    rng: np.random.Generator,
) -> GroupElement:
    """由未施加规范变换的真值构造带初始误差的估计，再施加同一规范变换"""
    truth = trajectory.base_state(0.0)
    init = cfg.initial
    r_hat = _initial_attitude(cfg, truth.rot.m, rng)
    p_hat = truth.p + rng.normal(0.0, init.position_std, 3) if init.position_std > 0.0 else truth.p.copy()
    v_hat = truth.v + rng.normal(0.0, init.velocity_std, 3) if init.velocity_std > 0.0 else truth.v.copy()
    g_hat = _initial_gravity(cfg, r_hat, imu0, rng)
    xhat = GroupElement(r_hat, p_hat, v_hat, g_hat, np.zeros((3, slots)))
    return apply_gauge(xhat, np.deg2rad(cfg.gauge_yaw_deg), cfg.gauge_offset, gauge_axis(cfg.gravity_vector))


class SimulationService:
    """单次仿真运行：真值、带噪 IMU、视觉测量、观测器与逐帧记录"""

    def __init__(self, cfg: ScenarioConfig, observer_config: Optional[ObserverConfig] = None):
        self.cfg = cfg
        self.observer_config = observer_config or ObserverConfig.from_noise(cfg.noise, cfg.imu_rate)
        self.extrinsics = rig_extrinsics(cfg.camera_rig)
        self.trajectory = CircularTrajectory(cfg)

    def _imu_stream(self, steps: int, dt: float, rng: np.random.Generator) -> List[ImuSample]:
        noise = self.cfg.noise
        gyro = rng.normal(0.0, noise.gyro_std, (steps + 1, 3)) if noise.gyro_std > 0.0 else np.zeros((steps + 1, 3))
        accel = rng.normal(0.0, noise.accel_std, (steps + 1, 3)) if noise.accel_std > 0.0 else np.zeros((steps + 1, 3))
        stream = []
        for k in range(steps + 1):
            clean = self.trajectory.imu_at(k * dt)
            stream.append(ImuSample(clean.omega_b + gyro[k], clean.a_b + accel[k], k * dt))
        return stream

    def _observe(
        self,
        truth: RigidBodyState,
        world: np.ndarray,
        tracker: LandmarkTracker,
        service: ObserverService,
        os: ObserverState,
        rng: np.random.Generator,
    ) -> Tuple[ObserverState, List[LandmarkObservation], RigidBodyState]:
        visible = select_visible(truth, world, self.cfg, self.extrinsics[0])
        pairs, fresh, recycled = tracker.assign(visible)
        truth_slots = self._slot_truth(truth, world, tracker)
        fresh = set(fresh)
        if recycled:
            logger.debug(f"回收 {len(recycled)} 个路标槽位")
        observations = []
        for slot, _ in pairs:
            try:
                clean = measure(truth_slots, slot, self.cfg.modality, self.extrinsics)
            except SingularMeasurementError as e:
                logger.warning(f"⚠️ 跳过槽位 {slot} 的退化观测: {e}")
                continue
            obs = corrupt(clean, self.cfg.noise, rng)
            if slot in fresh or not os.initialized[slot]:
                if os.initialized[slot]:
                    os = service.release_landmark(os, slot)
                os = service.init_landmark(os, obs)
            observations.append(obs)
        return os, observations, truth_slots

    @staticmethod
    def _slot_truth(truth: RigidBodyState, world: np.ndarray, tracker: LandmarkTracker) -> RigidBodyState:
        cols = np.zeros((3, tracker.slot_world.size))
        mask = tracker.assigned
        cols[:, mask] = world[:, tracker.slot_world[mask]]
        return truth.with_landmarks(cols)

    def run(self) -> RunResult:
        cfg = self.cfg
        started = time.perf_counter()
        rng = np.random.default_rng(cfg.seed)
        slots = cfg.slots
        dt = 1.0 / cfg.imu_rate
        steps = int(round(cfg.duration * cfg.imu_rate))
        per_frame = cfg.imu_per_frame

        world = self.trajectory.gauge_points(generate_landmarks(cfg, rng))
        imu = self._imu_stream(steps, dt, rng)
        service = ObserverService(self.observer_config, cfg.modality, self.extrinsics, cfg.gravity_vector)
        xhat0 = initial_estimate(cfg, self.trajectory, imu[0], slots, rng)
        os = service.create_state(xhat0, 0.0)
        tracker = LandmarkTracker(slots)

        rec: Dict[str, list] = {k: [] for k in (
            "times", "truth_p", "truth_q", "truth_v", "est_p", "est_q", "est_v", "est_g", "att_deg", "pos_m",
            "vel_err", "grav_err", "x_norm", "x", "sigma_p", "lyap_vp", "lyap_l1", "p_min_eig", "p_max_eig",
            "visible_count", "x_v", "x_g", "band_v", "band_g", "rotations", "pi_blocks",
        )}
        last_seen = 0.0
        dropout_warned = False
        logger.info(f"🚀 仿真开始: 模态 {cfg.modality.value}, 种子 {cfg.seed}, {steps} 步, {slots} 个路标槽位")

        for k in range(steps):
            step_obs: List[LandmarkObservation] = []
            if self.observer_config.continuous:
                os, step_obs, _ = self._observe(self.trajectory.state_at(k * dt), world, tracker, service, os, rng)
            os = service.predict(os, imu[k], dt, imu[k + 1], step_obs)
            if (k + 1) % per_frame:
                continue

            t = (k + 1) * dt
            truth = self.trajectory.state_at(t)
            if self.observer_config.continuous:
                observations = list(step_obs)
                truth_slots = self._slot_truth(truth, world, tracker)
                sigma_p = np.zeros(3 * slots)
            else:
                os, observations, truth_slots = self._observe(truth, world, tracker, service, os, rng)
                os, gains = service.update(os, observations)
                sigma_p = gains.sigma_p if gains is not None else np.zeros(3 * slots)

            if observations:
                last_seen = t
                dropout_warned = False
            elif t - last_seen > settings.DROPOUT_WARN_SECONDS and not dropout_warned:
                logger.warning(f"⚠️ t={t:.2f} s: 已连续 {t - last_seen:.2f} s 没有可用观测")
                dropout_warned = True

            self._record(rec, t, truth_slots, os, tracker, observations, sigma_p)

        result = RunResult(
            modality=cfg.modality,
            seed=cfg.seed,
            wall_clock=time.perf_counter() - started,
            **{k: np.asarray(v) for k, v in rec.items()},
        )
        logger.info(f"✅ 仿真完成: {result.epochs} 个相机时刻, 末时刻 ‖x‖ = {result.x_norm[-1]:.3e}, "
                    f"耗时 {result.wall_clock:.1f} s")
        return result

    def _record(self, rec, t, truth, os, tracker, observations, sigma_p):
        xh = os.xhat
        mask = tracker.assigned & os.initialized
        diag = compute_error_diagnostics(truth, os, mask)
        p_min, p_max = eigen_bounds(os.riccati)
        var = np.diag(os.riccati.p)
        out = build_C(list(observations), os.n, self.extrinsics)
        rec["times"].append(t)
        rec["truth_p"].append(truth.p)
        rec["truth_q"].append(_wxyz(truth.rot.m))
        rec["truth_v"].append(truth.v)
        rec["est_p"].append(xh.x1)
        rec["est_q"].append(_wxyz(xh.rot.m))
        rec["est_v"].append(xh.x2)
        rec["est_g"].append(xh.x3)
        rec["att_deg"].append(np.rad2deg(rotation_angle(truth.rot @ xh.rot.T)))
        rec["pos_m"].append(float(np.linalg.norm(truth.p - xh.x1)))
        rec["vel_err"].append(float(np.linalg.norm(diag.x[0:3])))
        rec["grav_err"].append(float(np.linalg.norm(diag.x[3:6])))
        rec["x_norm"].append(float(np.linalg.norm(diag.x)))
        rec["x"].append(diag.x)
        rec["sigma_p"].append(np.asarray(sigma_p))
        rec["lyap_vp"].append(diag.lyap_vp)
        rec["lyap_l1"].append(diag.lyap_l1)
        rec["p_min_eig"].append(p_min)
        rec["p_max_eig"].append(p_max)
        rec["visible_count"].append(len(observations))
        rec["x_v"].append(diag.x[0:3])
        rec["x_g"].append(diag.x[3:6])
        rec["band_v"].append(3.0 * np.sqrt(np.maximum(var[0:3], 0.0)))
        rec["band_g"].append(3.0 * np.sqrt(np.maximum(var[3:6], 0.0)))
        rec["rotations"].append(truth.rot.m)
        rec["pi_blocks"].append(out.pi_blocks)


def run_simulation(cfg: ScenarioConfig, observer_config: Optional[ObserverConfig] = None) -> RunResult:
    return SimulationService(cfg, observer_config).run()


def decay_rate(times: np.ndarray, values: np.ndarray, t_start: float = 0.0, t_end: Optional[float] = None) -> float:
    """log‖x‖ 的最小二乘直线拟合，返回衰减率 λ（正值表示指数收敛）"""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= t_start) & (values > 0.0)
    if t_end is not None:
        sel &= times <= t_end
    if np.count_nonzero(sel) < 2:
        raise ValueError("拟合衰减率至少需要两个正值样本")
    slope = np.polyfit(times[sel], np.log(values[sel]), 1)[0]
    return float(-slope)


def run_gramian(result: RunResult, n: int, delta: float = settings.GRAMIAN_DELTA,
                mu: float = settings.GRAMIAN_MU) -> List[GramianReport]:
    """用记录的真值姿态与 Π_i 块计算各窗口 Gramian（分解形式）"""
    times = result.times
    step = float(np.median(np.diff(times))) if times.size > 1 else delta

    def index(tau: float) -> int:
        return int(np.clip(np.rint((tau - times[0]) / step), 0, times.size - 1))

    def c_of_t(tau: float) -> np.ndarray:
        blocks = result.pi_blocks[index(tau)]
        c = np.zeros((3 * n, 3 * (n + 2)))
        for i in range(n):
            c[3 * i:3 * i + 3, 3 * (i + 2):3 * (i + 3)] = blocks[i]
        return c

    return gramian_windows(
        lambda t: gramian_factorized(lambda tau: result.rotations[index(tau)], c_of_t, n, t, delta, step, mu),
        float(times[0]),
        float(times[-1]),
        delta,
    )


@dataclass
class MonteCarloResult:
    """蒙特卡洛统计：逐时刻 RMSE"""
    times: np.ndarray
    rmse_att: np.ndarray
    rmse_pos: np.ndarray
    rmse_vel: np.ndarray
    rmse_grav: np.ndarray
    runs: List[RunResult]
    wall_clock: float

    @property
    def n_runs(self) -> int:
        return len(self.runs)


def _run_seed(args) -> RunResult:
    cfg, observer_config = args
    return SimulationService(cfg, observer_config).run()


def _workers(n_runs: int, threads: Optional[int]) -> int:
    cap = settings.THREADS if threads is None else threads
    if cap <= 0:
        cap = cpu_count() or 1
    return max(1, min(cap, n_runs))


def run_monte_carlo(
    cfg: ScenarioConfig,
    n_runs: int,
    observer_config: Optional[ObserverConfig] = None,
    threads: Optional[int] = None,
) -> MonteCarloResult:
    """独立种子 seed, seed+1, … 的多次运行；结果按种子顺序归并"""
    if n_runs < 1:
        raise ValueError("n_runs 必须 ≥ 1")
    started = time.perf_counter()
    jobs = [(cfg.model_copy(update={"seed": cfg.seed + k}), observer_config) for k in range(n_runs)]
    workers = _workers(n_runs, threads)
    logger.info(f"🚀 蒙特卡洛开始: {n_runs} 次运行, {workers} 个进程")
    if workers == 1:
        runs = [_run_seed(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            runs = list(executor.map(_run_seed, jobs))

    def rmse(name: str) -> np.ndarray:
        stacked = np.stack([getattr(r, name) for r in runs])
        return np.sqrt(np.mean(stacked ** 2, axis=0))

    result = MonteCarloResult(
        times=runs[0].times,
        rmse_att=rmse("att_deg"),
        rmse_pos=rmse("pos_m"),
        rmse_vel=rmse("vel_err"),
        rmse_grav=rmse("grav_err"),
        runs=runs,
        wall_clock=time.perf_counter() - started,
    )
    logger.info(f"📊 蒙特卡洛完成: 末时刻 RMSE att={result.rmse_att[-1]:.3f}° pos={result.rmse_pos[-1]:.3f} m "
                f"vel={result.rmse_vel[-1]:.3f} m/s grav={result.rmse_grav[-1]:.3f} m/s²")
    return result


def analyze_observability(cfg: ScenarioConfig, n: int = 1, delta: float = settings.GRAMIAN_DELTA,
                          mu: float = settings.GRAMIAN_MU) -> List[GramianReport]:
    """沿解析轨迹、固定 n 个路标的 Gramian 窗口分析（无噪声几何）"""
    rng = np.random.default_rng(cfg.seed)
    traj = CircularTrajectory(cfg)
    extrinsics = rig_extrinsics(cfg.camera_rig)
    world = traj.gauge_points(generate_landmarks(cfg, rng))
    state0 = traj.state_at(0.0)
    chosen = select_visible(state0, world, cfg.model_copy(update={"max_visible": n}), extrinsics[0])
    if chosen.size < n:
        dist = np.linalg.norm(world - state0.p[:, None], axis=0)
        rest = [i for i in np.argsort(dist, kind="stable") if i not in set(chosen.tolist())]
        chosen = np.concatenate([chosen, rest[:n - chosen.size]]).astype(int)
    landmarks = world[:, chosen]

    def c_of_t(tau: float) -> np.ndarray:
        truth = traj.state_at(tau).with_landmarks(landmarks)
        obs = [measure(truth, i, cfg.modality, extrinsics) for i in range(n)]
        return build_C(obs, n, extrinsics).c

    logger.info(f"🚀 可观性分析: 模态 {cfg.modality.value}, {n} 个路标, δ = {delta} s")
    return gramian_windows(
        lambda t: gramian_factorized(lambda tau: traj.state_at(tau).rot.m, c_of_t, n, t, delta,
                                     1.0 / cfg.cam_rate, mu),
        0.0,
        cfg.duration,
        delta,
    )
