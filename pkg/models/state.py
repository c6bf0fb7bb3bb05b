"""
观测器数值状态类型
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from config.settings import settings
from .geometry import GroupElement, Rotation


def _vec3(a, name: str) -> np.ndarray:
    out = np.array(a, dtype=float)
    if out.shape != (3,):
        raise ValueError(f"{name} 必须是 3 维向量, 实际 {out.shape}")
    out.setflags(write=False)
    return out


def _square(a, name: str, dim: Optional[int] = None) -> np.ndarray:
    out = np.array(a, dtype=float)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError(f"{name} 必须是方阵, 实际 {out.shape}")
    if dim is not None and out.shape[0] != dim:
        raise ValueError(f"{name} 维度应为 {dim}, 实际 {out.shape[0]}")
    out.setflags(write=False)
    return out


class Modality(str, Enum):
    """路标测量模态"""
    RELATIVE_POSITION = "relpos"
    STEREO_BEARING = "stereo"
    MONO_BEARING = "mono"

    @property
    def is_bearing(self) -> bool:
        return self is not Modality.RELATIVE_POSITION


@dataclass(frozen=True, eq=False)
class RigidBodyState:
    """解包后的物理状态 (R, p, v, g, 路标)"""
    rot: Rotation
    p: np.ndarray
    v: np.ndarray
    g: np.ndarray
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.rot, Rotation):
            object.__setattr__(self, "rot", Rotation(self.rot))
        for name in ("p", "v", "g"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))
        landmarks = np.array(self.landmarks, dtype=float)
        if landmarks.size == 0:
            landmarks = np.zeros((3, 0))
        if landmarks.ndim != 2 or landmarks.shape[0] != 3:
            raise ValueError(f"路标矩阵维度错误: {landmarks.shape}")
        landmarks.setflags(write=False)
        object.__setattr__(self, "landmarks", landmarks)

    @property
    def n(self) -> int:
        return self.landmarks.shape[1]

    def with_landmarks(self, landmarks: np.ndarray) -> "RigidBodyState":
        return replace(self, landmarks=landmarks)


@dataclass(frozen=True, eq=False)
class ImuSample:
    """机体系 IMU 采样：角速度与比力（视加速度）"""
    omega_b: np.ndarray
    a_b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega_b", _vec3(self.omega_b, "omega_b"))
        object.__setattr__(self, "a_b", _vec3(self.a_b, "a_b"))
        if not (np.all(np.isfinite(self.omega_b)) and np.all(np.isfinite(self.a_b))):
            raise ValueError("IMU 采样包含非有限数值")


@dataclass(frozen=True, eq=False)
class StructureConstants:
    """常数矩阵 H 及其移位块 S"""
    h: np.ndarray
    s: np.ndarray


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """机体系到相机系的外参"""
    r_c: Rotation
    p_c: np.ndarray

    def __post_init__(self):
        if not isinstance(self.r_c, Rotation):
            object.__setattr__(self, "r_c", Rotation(self.r_c))
        object.__setattr__(self, "p_c", _vec3(self.p_c, "p_c"))

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(Rotation.identity(), np.zeros(3))


@dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    """针孔相机内参矩阵 𝒦"""
    k: np.ndarray

    def __post_init__(self):
        k = _square(self.k, "k", 3)
        if abs(k[2, 2] - 1.0) > 1e-12 or np.any(k[2, :2] != 0.0) or k[1, 0] != 0.0:
            raise ValueError("内参矩阵必须为上三角且 k[2][2] = 1")
        if abs(np.linalg.det(k)) < 1e-12:
            raise ValueError("内参矩阵不可逆")
        object.__setattr__(self, "k", k)

    @classmethod
    def from_params(cls, fx: float, fy: float, cx: float, cy: float) -> "CameraIntrinsics":
        return cls(np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]))


@dataclass(frozen=True, eq=False)
class LandmarkObservation:
    """单个路标在单一模态下的测量"""
    landmark_id: int
    modality: Modality
    y: Optional[np.ndarray] = None
    y2: Optional[np.ndarray] = None
    visible: bool = True
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        if not self.visible:
            if self.y is not None or self.y2 is not None:
                raise ValueError("不可见观测不能携带测量向量")
            return
        if self.y is None:
            raise ValueError("可见观测缺少测量向量 y")
        object.__setattr__(self, "y", _vec3(self.y, "y"))
        if self.modality is Modality.STEREO_BEARING:
            if self.y2 is None:
                raise ValueError("双目观测缺少第二个方位向量 y2")
            object.__setattr__(self, "y2", _vec3(self.y2, "y2"))
        elif self.y2 is not None:
            raise ValueError("只有双目观测携带 y2")
        if self.modality.is_bearing:
            for b in (self.y, self.y2):
                if b is not None and abs(np.linalg.norm(b) - 1.0) > settings.UNIT_TOLERANCE:
                    raise ValueError("方位向量必须为单位向量")

    @classmethod
    def invisible(cls, landmark_id: int, modality: Modality, t: float = 0.0) -> "LandmarkObservation":
        return cls(landmark_id, modality, visible=False, t=t)

    def with_id(self, landmark_id: int) -> "LandmarkObservation":
        return replace(self, landmark_id=landmark_id)


@dataclass(frozen=True, eq=False)
class OutputMatrix:
    """输出矩阵 C(t) 及各路标的 Π_i 块"""
    c: np.ndarray
    pi_blocks: np.ndarray
    visible: np.ndarray

    @property
    def n(self) -> int:
        return self.pi_blocks.shape[0]


@dataclass(frozen=True, eq=False)
class RiccatiState:
    """Riccati 矩阵 P 与噪声权重 V、Q"""
    p: np.ndarray
    v_noise: np.ndarray
    q_noise: np.ndarray

    def __post_init__(self):
        p = _square(self.p, "p")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v_noise", _square(self.v_noise, "v_noise", p.shape[0]))
        object.__setattr__(self, "q_noise", _square(self.q_noise, "q_noise"))

    @classmethod
    def create(cls, p0, v_noise, q_noise) -> "RiccatiState":
        """构造并检查 V、Q 严格正定、P(0) 对称"""
        for name, m in (("V", v_noise), ("Q", q_noise)):
            m = np.asarray(m, dtype=float)
            if not np.allclose(m, m.T, atol=settings.SYMMETRY_TOLERANCE):
                raise ValueError(f"{name} 必须对称")
            try:
                cho_factor(m)
            except LinAlgError as e:
                raise ValueError(f"{name} 必须严格正定") from e
        p0 = np.asarray(p0, dtype=float)
        if not np.allclose(p0, p0.T, atol=settings.SYMMETRY_TOLERANCE):
            raise ValueError("P(0) 必须对称")
        return cls(p0, v_noise, q_noise)

    @property
    def dim(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class GainSet:
    """从 L(t) 提取的增益与新息"""
    k_p: np.ndarray
    k_v: np.ndarray
    k_g: np.ndarray
    gamma: np.ndarray
    sigma_p: np.ndarray
    sigma_r: np.ndarray


@dataclass(frozen=True, eq=False)
class ObserverState:
    """观测器状态：估计 X̂、Riccati 状态、姿态增益与已初始化路标掩码"""
    xhat: GroupElement
    riccati: RiccatiState
    k_r: float
    g_true: np.ndarray
    initialized: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not self.k_r > 0.0:
            raise ValueError(f"k_R 必须为正: {self.k_r}")
        object.__setattr__(self, "g_true", _vec3(self.g_true, "g_true"))
        mask = np.array(self.initialized, dtype=bool)
        if mask.shape != (self.xhat.n,):
            raise ValueError("初始化掩码长度必须等于路标数 n")
        mask.setflags(write=False)
        object.__setattr__(self, "initialized", mask)
        if self.riccati.dim != 3 * (self.xhat.n + 2):
            raise ValueError("P 维度必须为 3(n+2)")

    @property
    def n(self) -> int:
        return self.xhat.n


@dataclass(frozen=True, eq=False)
class ErrorDiagnostics:
    """平移误差状态 x、约化姿态 ğ 与 Lyapunov 函数值"""
    x: np.ndarray
    breve_g: np.ndarray
    lyap_vp: float
    lyap_l1: float
    lyap_l2: float


@dataclass(frozen=True, eq=False)
class GramianReport:
    """一个窗口上的可观性 Gramian"""
    window_start: float
    delta: float
    w: np.ndarray
    min_eig: float
    max_eig: float
    uniformly_observable_flag: bool


@dataclass(frozen=True, eq=False)
class PeCertificate:
    """单目持续激励证书：逐路标结果及最差窗口最小特征值"""
    passed: np.ndarray
    min_eig: np.ndarray
