"""
测试辅助：随机状态、小规模场景、EuRoC 格式数据夹具
"""
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation as SciRotation

from models import CameraExtrinsics, NoiseConfig, RigidBodyState, Rotation, ScenarioConfig
from services.simulation import CircularTrajectory

GRAVITY = np.array([0.0, 0.0, -9.81])
EUROC_T0_NS = 1403715273262142976


def random_rotation(rng: np.random.Generator) -> Rotation:
    return Rotation(SciRotation.random(random_state=rng).as_matrix())


def random_state(rng: np.random.Generator, n: int, spread: float = 5.0) -> RigidBodyState:
    return RigidBodyState(
        random_rotation(rng),
        rng.uniform(-spread, spread, 3),
        rng.normal(size=3),
        GRAVITY,
        rng.uniform(-spread, spread, (3, n)),
    )


def random_extrinsics(rng: np.random.Generator) -> CameraExtrinsics:
    return CameraExtrinsics(random_rotation(rng), rng.uniform(-0.1, 0.1, 3))


def small_scenario(**overrides) -> ScenarioConfig:
    """少量路标、全部跟踪的短时无噪声场景"""
    values = dict(
        duration=3.0,
        n_world_landmarks=4,
        max_visible=4,
        enforce_fov=False,
        noise=NoiseConfig.noiseless(),
    )
    values.update(overrides)
    return ScenarioConfig(**values)


def write_euroc_sequence(
    root: Path,
    duration: float = 8.0,
    imu_rate: float = 200.0,
    gyro_std: float = 0.0,
    accel_std: float = 0.0,
    seed: int = 0,
    accel_bias: Optional[np.ndarray] = None,
    report_bias: bool = False,
) -> Path:
    """用解析圆周轨迹生成 ASL 目录（mav0/imu0 与 state_groundtruth_estimate0）

    report_bias 为 True 时真值文件的 b_a 列写入加速度计偏置，否则写零。
    """
    traj = CircularTrajectory(ScenarioConfig())
    rng = np.random.default_rng(seed)
    bias = np.zeros(3) if accel_bias is None else np.asarray(accel_bias, dtype=float)
    step_ns = int(round(1e9 / imu_rate))
    steps = int(round(duration * imu_rate))
    imu_dir = root / "mav0" / "imu0"
    gt_dir = root / "mav0" / "state_groundtruth_estimate0"
    imu_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    imu_lines = ["#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],w_RS_S_z [rad s^-1],"
                 "a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]"]
    gt_lines = ["#timestamp, p_RS_R_x [m], p_RS_R_y [m], p_RS_R_z [m], q_RS_w [], q_RS_x [], q_RS_y [], "
                "q_RS_z [], v_RS_R_x [m s^-1], v_RS_R_y [m s^-1], v_RS_R_z [m s^-1], b_w_RS_S_x [rad s^-1], "
                "b_w_RS_S_y [rad s^-1], b_w_RS_S_z [rad s^-1], b_a_RS_S_x [m s^-2], b_a_RS_S_y [m s^-2], "
                "b_a_RS_S_z [m s^-2]"]
    for k in range(steps + 1):
        ns = EUROC_T0_NS + k * step_ns
        t = k * step_ns * 1e-9
        imu = traj.imu_at(t)
        w = imu.omega_b + (rng.normal(0.0, gyro_std, 3) if gyro_std > 0.0 else 0.0)
        a = imu.a_b + bias + (rng.normal(0.0, accel_std, 3) if accel_std > 0.0 else 0.0)
        imu_lines.append(",".join([str(ns)] + ["%.17g" % x for x in np.concatenate([w, a])]))
        s = traj.state_at(t)
        qx, qy, qz, qw = SciRotation.from_matrix(s.rot.m).as_quat()
        reported = bias if report_bias else np.zeros(3)
        row = np.concatenate([s.p, [qw, qx, qy, qz], s.v, np.zeros(3), reported])
        gt_lines.append(",".join([str(ns)] + ["%.17g" % x for x in row]))
    (imu_dir / "data.csv").write_text("\n".join(imu_lines) + "\n", encoding="utf-8")
    (gt_dir / "data.csv").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    return root
