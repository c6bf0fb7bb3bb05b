"""
李群基础类型：SO(3) 与 SE_{3+n}(3)
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import polar

from config.settings import settings


def _frozen(a, shape=None, name: str = "array") -> np.ndarray:
    out = np.array(a, dtype=float)
    if shape is not None and out.shape != shape:
        raise ValueError(f"{name} 维度错误: 期望 {shape}, 实际 {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Rotation:
    """SO(3) 方向余弦矩阵

    漂移超过 ROTATION_TOLERANCE 时通过极分解投影回 SO(3)；
    漂移过大或行列式为负则拒绝构造。
    """
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"旋转矩阵维度错误: {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("旋转矩阵包含非有限数值")
        drift = np.linalg.norm(m.T @ m - np.eye(3))
        if drift > settings.ROTATION_TOLERANCE:
            if drift > settings.ROTATION_REJECT_TOLERANCE:
                raise ValueError(f"不是旋转矩阵: ‖RᵀR − I‖ = {drift:.3e}")
            m, _ = polar(m)
        if np.linalg.det(m) <= 0.0:
            raise ValueError("旋转矩阵行列式必须为 +1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @property
    def T(self) -> "Rotation":
        return Rotation(self.m.T)

    def __matmul__(self, other: Union["Rotation", np.ndarray]):
        if isinstance(other, Rotation):
            return Rotation(self.m @ other.m)
        return self.m @ np.asarray(other, dtype=float)

    def __repr__(self) -> str:
        return f"Rotation({np.array2string(self.m, precision=6)})"


@dataclass(frozen=True, eq=False)
class GroupElement:
    """SE_{3+n}(3) 元素 𝓜(R, x1, x2, x3, X_L)

    对真实状态与估计而言 x1、x2、x3 分别为位置、速度、重力，
    xl 的每一列为一个路标位置。
    """
    rot: Rotation
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    xl: np.ndarray

    def __post_init__(self):
        if not isinstance(self.rot, Rotation):
            object.__setattr__(self, "rot", Rotation(self.rot))
        for name in ("x1", "x2", "x3"):
            object.__setattr__(self, name, _frozen(getattr(self, name), (3,), name))
        xl = np.array(self.xl, dtype=float)
        if xl.size == 0:
            xl = np.zeros((3, 0))
        if xl.ndim != 2 or xl.shape[0] != 3:
            raise ValueError(f"路标矩阵维度错误: {xl.shape}")
        object.__setattr__(self, "xl", _frozen(xl))

    @property
    def n(self) -> int:
        return self.xl.shape[1]

    def columns(self) -> np.ndarray:
        """平移部分 [x1 x2 x3 X_L]，3×(3+n)"""
        return np.column_stack([self.x1, self.x2, self.x3, self.xl])


@dataclass(frozen=True, eq=False)
class TangentElement:
    """李代数 𝔰𝔢_{3+n}(3) 元素 𝒱(Ω, x1, x2, x3, X_L)"""
    omega: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    xl: np.ndarray

    def __post_init__(self):
        omega = _frozen(self.omega, (3, 3), "omega")
        if not np.array_equal(omega, -omega.T):
            raise ValueError("omega 必须严格反对称")
        object.__setattr__(self, "omega", omega)
        for name in ("x1", "x2", "x3"):
            object.__setattr__(self, name, _frozen(getattr(self, name), (3,), name))
        xl = np.array(self.xl, dtype=float)
        if xl.size == 0:
            xl = np.zeros((3, 0))
        if xl.ndim != 2 or xl.shape[0] != 3:
            raise ValueError(f"路标矩阵维度错误: {xl.shape}")
        object.__setattr__(self, "xl", _frozen(xl))

    @classmethod
    def from_vectors(cls, w, x1, x2, x3, xl) -> "TangentElement":
        w = np.asarray(w, dtype=float)
        omega = np.array([
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ])
        return cls(omega, x1, x2, x3, xl)

    @property
    def n(self) -> int:
        return self.xl.shape[1]
