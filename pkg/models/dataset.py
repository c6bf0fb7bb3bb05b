"""
EuRoC 数据记录类型
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .geometry import Rotation
from .state import ImuSample, LandmarkObservation, RigidBodyState


@dataclass(frozen=True, eq=False)
class GroundTruthSample:
    """state_groundtruth_estimate0 的一行：位置、姿态、速度与偏置估计"""
    t: float
    p: np.ndarray
    rot: Rotation
    v: np.ndarray
    bias_w: np.ndarray
    bias_a: np.ndarray


@dataclass(frozen=True, eq=False)
class EurocRecords:
    """一个序列的 IMU 与真值流（时间以首个真值样本为零点，单位 s）"""
    imu: List[ImuSample]
    gt: List[GroundTruthSample]
    sequence_name: str = ""


@dataclass(frozen=True, eq=False)
class CameraEpoch:
    """一个相机时刻：插值真值与按世界路标编号给出的观测"""
    t: float
    truth: RigidBodyState
    observations: List[LandmarkObservation] = field(default_factory=list)
