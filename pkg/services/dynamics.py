"""
刚体运动学、群形式动力学 Ẋ = [X,H] + XV 及数值积分
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from models import (
    GroupElement,
    ImuSample,
    PropagationError,
    RigidBodyState,
    StructureConstants,
    TangentElement,
)
from .liegroup import embed, embed_tangent, exp_so3, skew

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StateDerivative:
    """分量形式的状态导数"""
    r_dot: np.ndarray
    p_dot: np.ndarray
    v_dot: np.ndarray
    g_dot: np.ndarray
    landmarks_dot: np.ndarray

    def embed(self) -> np.ndarray:
        n = self.landmarks_dot.shape[1]
        m = np.zeros((6 + n, 6 + n))
        m[:3, :3] = self.r_dot
        m[:3, 3] = self.p_dot
        m[:3, 4] = self.v_dot
        m[:3, 5] = self.g_dot
        m[:3, 6:] = self.landmarks_dot
        return m


def build_group_velocity(imu: ImuSample, n: int) -> TangentElement:
    """V = 𝒱([ω]ₓ, 0, a, 0, 0)"""
    z = np.zeros(3)
    return TangentElement.from_vectors(imu.omega_b, z, imu.a_b, z, np.zeros((3, n)))


def build_structure(n: int) -> StructureConstants:
    if n < 0:
        raise ValueError("n 不能为负")
    s = np.zeros((3 + n, 3 + n))
    s[1, 0] = 1.0
    s[2, 1] = 1.0
    h = np.zeros((6 + n, 6 + n))
    h[3:, 3:] = s
    return StructureConstants(h=h, s=s)


def to_group(state: RigidBodyState) -> GroupElement:
    return GroupElement(state.rot, state.p, state.v, state.g, state.landmarks)


def from_group(x: GroupElement, t: float = 0.0) -> RigidBodyState:
    return RigidBodyState(x.rot, x.x1, x.x2, x.x3, x.xl, t)


def derivative_component(s: RigidBodyState, imu: ImuSample) -> StateDerivative:
    r = s.rot.m
    return StateDerivative(
        r_dot=r @ skew(imu.omega_b),
        p_dot=s.v.copy(),
        v_dot=s.g + r @ imu.a_b,
        g_dot=np.zeros(3),
        landmarks_dot=np.zeros((3, s.n)),
    )


def derivative_group(x: GroupElement, vel: TangentElement, sc: StructureConstants) -> np.ndarray:
    """XH − HX + XV（嵌入形式）"""
    if vel.n != x.n or sc.h.shape != (6 + x.n, 6 + x.n):
        raise ValueError(f"维度不一致: X 的 n={x.n}, V 的 n={vel.n}, H 为 {sc.h.shape}")
    xm = embed(x)
    return xm @ sc.h - sc.h @ xm + xm @ embed_tangent(vel)


def integrate_step(
    s: RigidBodyState,
    imu: ImuSample,
    dt: float,
    imu_next: Optional[ImuSample] = None,
) -> RigidBodyState:
    """单步积分

    (p, v) 用四阶 Runge–Kutta；姿态用指数映射。未给出下一采样时 IMU
    视为零阶保持，给出时各级取线性插值、姿态取中点角速度。
    g 与路标原样传递。
    """
    if dt <= 0.0:
        raise ValueError(f"dt 必须为正: {dt}")
    w0, a0 = imu.omega_b, imu.a_b
    if imu_next is None:
        w1, a1 = w0, a0
    else:
        w1, a1 = imu_next.omega_b, imu_next.a_b

    r0 = s.rot
    r_half = r0 @ exp_so3((0.75 * w0 + 0.25 * w1) * (0.5 * dt))
    r_end = r0 @ exp_so3(0.5 * (w0 + w1) * dt)

    k1 = s.g + r0 @ a0
    k23 = s.g + r_half @ (0.5 * (a0 + a1))
    k4 = s.g + r_end @ a1

    v1 = s.v + dt / 6.0 * (k1 + 4.0 * k23 + k4)
    p1 = s.p + dt * s.v + dt * dt / 6.0 * (k1 + 2.0 * k23)
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(v1))):
        raise PropagationError(f"t={s.t:.3f} s 积分出现非有限数值")
    return RigidBodyState(r_end, p1, v1, s.g, s.landmarks, s.t + dt)
