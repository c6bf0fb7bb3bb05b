"""
VIO观测器全局配置文件
"""
from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # 重力配置（惯性系）
    GRAVITY_MAGNITUDE: float = 9.81            # m/s²
    GRAVITY_DIRECTION: List[float] = [0.0, 0.0, -1.0]  # 惯性系下的重力方向（单位向量）

    # 数值容差
    ROTATION_TOLERANCE: float = 1e-9     # RᵀR − I 的漂移超过此值时做极分解重新正交化
    ROTATION_REJECT_TOLERANCE: float = 1e-3  # 漂移超过此值视为非旋转矩阵
    SKEW_TOLERANCE: float = 1e-9         # unskew 对称部分容差
    PROJECTION_EPS: float = 1e-9         # π(x) 的奇异阈值
    CAMERA_EPS: float = 1e-6             # 相机中心与路标重合阈值 (m)
    UNIT_TOLERANCE: float = 1e-9         # 方位向量/旋转轴的单位范数容差

    # 观测器默认参数
    K_R: float = 1.0                     # 姿态增益 k_R
    P0_SIGMA_V: float = 1.0              # P(0) 速度块标准差
    P0_SIGMA_G: float = 0.1              # P(0) 重力块标准差
    P0_SIGMA_L: float = 1.0              # P(0) 路标块标准差
    ASSUMED_DEPTH: float = 3.0           # 单目初始化假设深度 d₀ (m)
    NOMINAL_DEPTH: float = 4.0           # 方位噪声换算为 Q 时使用的名义深度 (m)
    NOISE_FLOOR: float = 1e-6            # V/Q 对角元素下限，保证零噪声时仍正定

    # Riccati 监控
    CONDITION_WARN: float = 1e12         # 新息协方差条件数告警阈值
    COLLAPSE_TOLERANCE: float = 1e-9     # P 最小特征值低于 −tol 视为协方差崩溃
    SYMMETRY_TOLERANCE: float = 1e-9     # P 对称性容差

    # 可观性分析
    GRAMIAN_DELTA: float = 2.0           # Gramian 窗口长度 δ (s)
    GRAMIAN_MU: float = 1e-4             # 一致可观判定阈值 μ
    PE_DELTA: float = 2.0                # 单目持续激励窗口 δ* (s)
    PE_MU: float = 1e-4                  # 单目持续激励阈值 μ*

    # 运行监控
    DROPOUT_WARN_SECONDS: float = 1.0    # 连续无可用观测超过此时长告警
    GT_GAP_LIMIT: float = 0.5            # 真值插值允许的最大间隔 (s)
    ALIGN_WINDOW: float = 1.0            # 4-DOF 对齐窗口 (s)

    # 并行与输出
    THREADS: int = 0                     # 并行进程数上限，0 表示使用 CPU 核数
    OUTPUT_DIR: str = "runs"
    RESULTS_DIR: str = "results"
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(env_prefix="LIE_VIO_", env_file=".env")


settings = Settings()
