"""
SO(3) 与 SE_{3+n}(3) 的基本运算
"""
import logging

import numpy as np

from config.settings import settings
from models import GroupElement, Rotation, SingularMeasurementError, TangentElement

logger = logging.getLogger(__name__)


def skew(v) -> np.ndarray:
    """[v]ₓ，满足 [v]ₓw = v × w"""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"skew 需要 3 维向量, 实际 {v.shape}")
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def unskew(m, tol: float = settings.SKEW_TOLERANCE) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"unskew 需要 3×3 矩阵, 实际 {m.shape}")
    if np.linalg.norm(m + m.T) > tol:
        raise ValueError("矩阵不是反对称矩阵")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def angle_axis(theta: float, v) -> Rotation:
    """I + sinθ[v]ₓ + (1 − cosθ)[v]ₓ²"""
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > settings.UNIT_TOLERANCE:
        raise ValueError(f"旋转轴必须为单位向量, ‖v‖ = {np.linalg.norm(v)}")
    k = skew(v)
    return Rotation(np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k))


def exp_so3(w) -> Rotation:
    """旋转向量的指数映射，零向量精确返回单位阵"""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta == 0.0:
        return Rotation.identity()
    return angle_axis(theta, w / theta)


def rotation_angle(r: Rotation) -> float:
    """测地角 (rad)

    atan2(‖vee(R − Rᵀ)‖/2, (tr R − 1)/2)，在 0 与 π 附近都保持精度。
    """
    m = r.m
    s = 0.5 * np.linalg.norm([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    c = 0.5 * (np.trace(m) - 1.0)
    return float(np.arctan2(s, c))


def identity(n: int) -> GroupElement:
    z = np.zeros(3)
    return GroupElement(Rotation.identity(), z, z, z, np.zeros((3, n)))


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.n != b.n:
        raise ValueError(f"路标数不一致: {a.n} != {b.n}")
    r = a.rot.m
    return GroupElement(
        a.rot @ b.rot,
        r @ b.x1 + a.x1,
        r @ b.x2 + a.x2,
        r @ b.x3 + a.x3,
        r @ b.xl + a.xl,
    )


def inverse(a: GroupElement) -> GroupElement:
    rt = a.rot.m.T
    return GroupElement(Rotation(rt), -rt @ a.x1, -rt @ a.x2, -rt @ a.x3, -rt @ a.xl)


def embed(x: GroupElement) -> np.ndarray:
    """𝓜 映射：(6+n)×(6+n) 矩阵"""
    m = np.eye(6 + x.n)
    m[:3, :3] = x.rot.m
    m[:3, 3:] = x.columns()
    return m


def extract(m) -> GroupElement:
    """embed 的逆映射，检查块结构"""
    m = np.asarray(m, dtype=float)
    size = m.shape[0]
    if m.ndim != 2 or m.shape[1] != size or size < 6:
        raise ValueError(f"矩阵维度错误: {m.shape}")
    if np.any(m[3:, :3] != 0.0) or not np.array_equal(m[3:, 3:], np.eye(size - 3)):
        raise ValueError("矩阵不具有 SE_{3+n}(3) 的块结构")
    return GroupElement(Rotation(m[:3, :3]), m[:3, 3], m[:3, 4], m[:3, 5], m[:3, 6:])


def embed_tangent(t: TangentElement) -> np.ndarray:
    """𝒱 映射"""
    m = np.zeros((6 + t.n, 6 + t.n))
    m[:3, :3] = t.omega
    m[:3, 3] = t.x1
    m[:3, 4] = t.x2
    m[:3, 5] = t.x3
    m[:3, 6:] = t.xl
    return m


def vectorize(m) -> np.ndarray:
    """按列堆叠"""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("vectorize 需要二维矩阵")
    return m.reshape(-1, order="F")


def unvectorize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % 3 != 0:
        raise ValueError(f"向量长度必须是 3 的倍数, 实际 {v.size}")
    return v.reshape((3, -1), order="F")


def project(x, eps: float = settings.PROJECTION_EPS) -> np.ndarray:
    """正交投影 π(x) = I − xxᵀ/‖x‖²"""
    x = np.asarray(x, dtype=float)
    nrm2 = float(x @ x)
    if nrm2 <= eps ** 2:
        raise SingularMeasurementError(f"投影输入接近零: ‖x‖ = {np.sqrt(nrm2):.3e}")
    return np.eye(x.size) - np.outer(x, x) / nrm2


def apply_gauge(x: GroupElement, yaw: float, offset, axis) -> GroupElement:
    """全局绕重力轴偏航 + 平移：位置类列 (x1, 路标) 旋转并平移，速度与重力列只旋转"""
    axis = np.asarray(axis, dtype=float)
    q = angle_axis(yaw, axis / np.linalg.norm(axis))
    c = np.asarray(offset, dtype=float)
    return GroupElement(
        q @ x.rot,
        q @ x.x1 + c,
        q @ x.x2,
        q @ x.x3,
        q @ x.xl + c[:, None],
    )
