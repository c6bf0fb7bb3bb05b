"""
仿真场景与观测器配置模型
"""
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from config.settings import settings
from .state import Modality


class NoiseConfig(BaseModel):
    """传感器噪声标准差"""
    gyro_std: float = Field(0.0035, ge=0.0, description="陀螺噪声标准差 (rad/s)")
    accel_std: float = Field(0.095, ge=0.0, description="加速度计噪声标准差 (m/s²)")
    bearing_std: float = Field(0.5, ge=0.0, description="方位噪声标准差 (deg)")
    relpos_std: float = Field(0.05, ge=0.0, description="相对位置噪声标准差 (m)")
    measurement_scale: float = Field(1.0, ge=0.0, description="视觉测量噪声缩放系数")

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(gyro_std=0.0, accel_std=0.0, bearing_std=0.0, relpos_std=0.0)

    @property
    def effective_bearing_rad(self) -> float:
        return float(np.deg2rad(self.bearing_std) * self.measurement_scale)

    @property
    def effective_relpos_std(self) -> float:
        return self.relpos_std * self.measurement_scale


class InitialErrorConfig(BaseModel):
    """初始估计误差"""
    attitude_mode: Literal["perturb", "uniform"] = Field("perturb", description="姿态初值：小扰动或 SO(3) 均匀随机")
    attitude_deg: float = Field(5.0, ge=0.0, description="姿态扰动角 (deg)")
    position_std: float = Field(0.0, ge=0.0, description="位置初始误差标准差 (m)")
    velocity_std: float = Field(0.2, ge=0.0, description="速度初始误差标准差 (m/s)")
    gravity_mode: Literal["nominal", "random", "stationary"] = Field("nominal", description="重力估计初值")
    antipode_exclusion_deg: float = Field(5.0, ge=0.0, lt=180.0, description="重力反向点排除锥半角 (deg)")


class ScenarioConfig(BaseModel):
    """圆周轨迹仿真场景"""
    radius: float = Field(3.0, gt=0.0, description="圆周半径 (m)")
    v_forward: float = Field(1.0, ge=0.0, description="前向速度 (m/s)")
    vert_amp: float = Field(1.5, ge=0.0, description="竖直振幅 (m)")
    vert_freq: float = Field(0.1, ge=0.0, description="竖直频率 (Hz)")
    roll_amp: float = Field(5.0, ge=0.0, description="横滚振幅 (deg)")
    roll_freq: float = Field(0.08, ge=0.0, description="横滚频率 (Hz)")
    pitch_amp: float = Field(3.0, ge=0.0, description="俯仰振幅 (deg)")
    pitch_freq: float = Field(0.06, ge=0.0, description="俯仰频率 (Hz)")
    duration: float = Field(50.0, gt=0.0, description="仿真时长 (s)")
    imu_rate: float = Field(200.0, description="IMU 频率 (Hz)")
    cam_rate: float = Field(20.0, description="相机频率 (Hz)")
    n_world_landmarks: int = Field(1000, ge=1, description="世界路标数量")
    cube_side: float = Field(12.0, gt=0.0, description="立方体环境边长 (m)")
    max_visible: int = Field(50, ge=1, description="每帧最多可见路标数")
    max_tracked: Optional[int] = Field(None, ge=1, description="观测器路标槽位数，缺省等于 max_visible")
    fov_deg: float = Field(120.0, description="视场角 (deg)")
    include_floor_ceiling: bool = Field(False, description="是否在地面/天花板上也布置路标")
    enforce_fov: bool = Field(True, description="是否执行视场可见性判断")
    stationary: bool = Field(False, description="静止平台")
    gravity: List[float] = Field(
        default_factory=lambda: list(settings.GRAVITY_MAGNITUDE * np.asarray(settings.GRAVITY_DIRECTION)),
        description="惯性系重力 (m/s²)",
    )
    camera_rig: Literal["euroc_forward", "identity"] = Field("euroc_forward", description="相机外参")
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    initial: InitialErrorConfig = Field(default_factory=InitialErrorConfig)
    gauge_yaw_deg: float = Field(0.0, description="全局绕重力轴偏航 (deg)")
    gauge_offset: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="全局平移 (m)")
    seed: int = Field(0, description="随机种子")
    modality: Modality = Field(Modality.RELATIVE_POSITION, description="测量模态")

    @field_validator("imu_rate", "cam_rate")
    @classmethod
    def _positive_rate(cls, v: float) -> float:
        if v <= 0.0:
            raise ValueError("频率必须为正")
        return v

    @field_validator("fov_deg")
    @classmethod
    def _fov_range(cls, v: float) -> float:
        if not 0.0 < v < 360.0:
            raise ValueError("视场角必须在 (0, 360) 内")
        return v

    @field_validator("gravity", "gauge_offset")
    @classmethod
    def _three_vector(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("必须是 3 维向量")
        return v

    @model_validator(mode="after")
    def _rates_compatible(self) -> "ScenarioConfig":
        ratio = self.imu_rate / self.cam_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("IMU 频率必须是相机频率的整数倍")
        g_norm = float(np.linalg.norm(self.gravity))
        if g_norm > 0.0 and not 9.7 <= g_norm <= 9.9:
            raise ValueError(f"重力模长 {g_norm:.3f} 不在 [9.7, 9.9] 内")
        return self

    @property
    def slots(self) -> int:
        return self.max_tracked or self.max_visible

    @property
    def imu_per_frame(self) -> int:
        return int(round(self.imu_rate / self.cam_rate))

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


class ObserverConfig(BaseModel):
    """观测器调参：姿态增益、P(0)、V/Q 对角权重"""
    k_r: float = Field(settings.K_R, gt=0.0, description="姿态增益 k_R")
    p0_sigma_v: float = Field(settings.P0_SIGMA_V, gt=0.0)
    p0_sigma_g: float = Field(settings.P0_SIGMA_G, gt=0.0)
    p0_sigma_l: float = Field(settings.P0_SIGMA_L, gt=0.0)
    v_velocity: float = Field(1e-4, gt=0.0, description="V 速度块")
    v_gravity: float = Field(1e-5, gt=0.0, description="V 重力块")
    v_landmark: float = Field(1e-5, gt=0.0, description="V 路标块")
    q_relpos: float = Field(0.0025, gt=0.0, description="Q 相对位置 (m²)")
    q_bearing: float = Field(1.2e-3, gt=0.0, description="Q 方位投影残差 (m²)")
    assumed_depth: float = Field(settings.ASSUMED_DEPTH, gt=0.0, description="单目初始化深度 d₀ (m)")
    continuous: bool = Field(False, description="连续测量模式（完整 CRE）")
    stationary_start: bool = Field(False, description="用首个加速度计采样初始化 ĝ")

    @classmethod
    def from_noise(cls, noise: NoiseConfig, imu_rate: float, **overrides) -> "ObserverConfig":
        """由传感器噪声标准差得到对角 V、Q

        IMU 驱动的块取连续谱密度 σ²/rate；方位噪声按名义深度换算为米。
        """
        floor = settings.NOISE_FLOOR
        g = settings.GRAVITY_MAGNITUDE
        depth = settings.NOMINAL_DEPTH
        values = dict(
            v_velocity=max(noise.accel_std ** 2 / imu_rate, floor),
            v_gravity=max((g * noise.gyro_std) ** 2 / imu_rate, floor),
            v_landmark=max((depth * noise.gyro_std) ** 2 / imu_rate, floor),
            q_relpos=max(noise.effective_relpos_std ** 2, floor),
            q_bearing=max((depth * noise.effective_bearing_rad) ** 2, floor),
        )
        values.update(overrides)
        return cls(**values)

    def measurement_variance(self, modality: Modality) -> float:
        return self.q_relpos if modality is Modality.RELATIVE_POSITION else self.q_bearing


class EurocConfig(BaseModel):
    """EuRoC 序列评估配置"""
    cam_rate: float = Field(20.0, gt=0.0, description="合成测量频率 (Hz)")
    modality: Modality = Field(Modality.RELATIVE_POSITION)
    noise: NoiseConfig = Field(default_factory=NoiseConfig, description="仅作用于视觉测量")
    max_visible: int = Field(50, ge=1)
    fov_deg: float = Field(120.0, gt=0.0, lt=360.0)
    enforce_fov: bool = Field(True)
    include_floor_ceiling: bool = Field(True, description="包围盒六个面都布置路标")
    inflate: float = Field(2.0, ge=0.0, description="包围盒外扩 (m)")
    landmark_density: float = Field(1000.0 / (4.0 * 12.0 ** 2), gt=0.0, description="每平方米路标数")
    compensate_biases: bool = Field(True, description="用真值中的偏置估计补偿 IMU")
    updates_enabled: bool = Field(True, description="关闭时为纯 IMU 推算")
    max_duration: Optional[float] = Field(None, gt=0.0, description="截断评估时长 (s)")
    seed: int = Field(0)
