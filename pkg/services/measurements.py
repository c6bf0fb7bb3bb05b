"""
路标测量模型：相对位置、双目方位、单目方位；新息与输出矩阵 C(t)
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from models import (
    CameraExtrinsics,
    CameraIntrinsics,
    GroupElement,
    LandmarkObservation,
    Modality,
    OutputMatrix,
    RigidBodyState,
    SingularMeasurementError,
)
from .liegroup import embed, inverse, project

logger = logging.getLogger(__name__)


def _cameras(modality: Modality, extrinsics: Sequence[CameraExtrinsics]) -> Sequence[CameraExtrinsics]:
    needed = {Modality.MONO_BEARING: 1, Modality.STEREO_BEARING: 2}.get(modality, 0)
    if len(extrinsics) < needed:
        raise ValueError(f"{modality.value} 模态需要 {needed} 组相机外参, 实际 {len(extrinsics)}")
    return extrinsics[:needed]


def _bearing(rel: np.ndarray, cam: CameraExtrinsics) -> np.ndarray:
    d = cam.r_c.m.T @ (rel - cam.p_c)
    nrm = float(np.linalg.norm(d))
    if nrm <= settings.CAMERA_EPS:
        raise SingularMeasurementError(f"路标与相机中心重合: 距离 {nrm:.3e} m")
    return d / nrm


def measure(
    state: RigidBodyState,
    i: int,
    modality: Modality,
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> LandmarkObservation:
    """由真实状态生成第 i 个路标的无噪声测量"""
    modality = Modality(modality)
    rel = state.rot.m.T @ (state.landmarks[:, i] - state.p)
    if modality is Modality.RELATIVE_POSITION:
        return LandmarkObservation(i, modality, y=rel, t=state.t)
    bearings = [_bearing(rel, cam) for cam in _cameras(modality, extrinsics)]
    if modality is Modality.MONO_BEARING:
        return LandmarkObservation(i, modality, y=bearings[0], t=state.t)
    return LandmarkObservation(i, modality, y=bearings[0], y2=bearings[1], t=state.t)


def landmark_selector(i: int, n: int) -> np.ndarray:
    """𝐫_i = (0₃, 1, 0, 0, −e_i)"""
    r = np.zeros(6 + n)
    r[3] = 1.0
    r[6 + i] = -1.0
    return r


def group_output(x: GroupElement, i: int) -> np.ndarray:
    """群形式 X⁻¹𝐫_i"""
    return embed(inverse(x)) @ landmark_selector(i, x.n)


def group_bearing(x: GroupElement, i: int, cam: CameraExtrinsics) -> np.ndarray:
    """群形式 X_c⁻¹X⁻¹𝐫_i 的前三维，归一化"""
    n = x.n
    xc = np.eye(6 + n)
    xc[:3, :3] = cam.r_c.m
    xc[:3, 3] = cam.p_c
    z = np.linalg.solve(xc, group_output(x, i))
    top = z[:3]
    return top / np.linalg.norm(top)


def pixel_to_bearing(intr: CameraIntrinsics, u: float, v: float) -> np.ndarray:
    b = np.linalg.solve(intr.k, np.array([u, v, 1.0]))
    return b / np.linalg.norm(b)


def bearing_to_pixel(intr: CameraIntrinsics, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b[2] <= 0.0:
        raise SingularMeasurementError("方位向量在相机后方，无法投影")
    h = intr.k @ b
    return h[:2] / h[2]


def _pi_block(obs: LandmarkObservation, extrinsics: Sequence[CameraExtrinsics]) -> np.ndarray:
    if obs.modality is Modality.RELATIVE_POSITION:
        return np.eye(3)
    cams = _cameras(obs.modality, extrinsics)
    rays = (obs.y,) if obs.modality is Modality.MONO_BEARING else (obs.y, obs.y2)
    return sum(project(cam.r_c.m @ ray) for cam, ray in zip(cams, rays))


def innovation(
    obs: LandmarkObservation,
    xhat: GroupElement,
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> Tuple[np.ndarray, np.ndarray]:
    """单个路标的新息 σ^p_i 及 Π_i"""
    if not obs.visible:
        raise ValueError(f"路标 {obs.landmark_id} 不可见，无新息")
    i = obs.landmark_id
    yhat = xhat.rot.m.T @ (xhat.xl[:, i] - xhat.x1)
    if obs.modality is Modality.RELATIVE_POSITION:
        return yhat - obs.y, np.eye(3)
    cams = _cameras(obs.modality, extrinsics)
    rays = (obs.y,) if obs.modality is Modality.MONO_BEARING else (obs.y, obs.y2)
    sigma = np.zeros(3)
    pi = np.zeros((3, 3))
    for cam, ray in zip(cams, rays):
        pq = project(cam.r_c.m @ ray)
        sigma += pq @ (yhat - cam.p_c)
        pi += pq
    return sigma, pi


def _matrix_from_blocks(pi_blocks: np.ndarray, visible: np.ndarray) -> OutputMatrix:
    n = pi_blocks.shape[0]
    c = np.zeros((3 * n, 3 * (n + 2)))
    for i in np.flatnonzero(visible):
        c[3 * i:3 * i + 3, 3 * (i + 2):3 * (i + 3)] = pi_blocks[i]
    return OutputMatrix(c=c, pi_blocks=pi_blocks, visible=visible)


def _check_index(obs: LandmarkObservation, n: int):
    if not 0 <= obs.landmark_id < n:
        raise ValueError(f"路标索引 {obs.landmark_id} 超出范围 [0, {n})")


def build_C(
    observations: List[LandmarkObservation],
    n: int,
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> OutputMatrix:
    """块对角放置 Π_i；不可见路标对应行为零"""
    pi_blocks = np.zeros((n, 3, 3))
    visible = np.zeros(n, dtype=bool)
    for obs in observations:
        _check_index(obs, n)
        if obs.visible:
            pi_blocks[obs.landmark_id] = _pi_block(obs, extrinsics)
            visible[obs.landmark_id] = True
    return _matrix_from_blocks(pi_blocks, visible)


def assemble(
    observations: List[LandmarkObservation],
    xhat: GroupElement,
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> Tuple[np.ndarray, OutputMatrix]:
    """一次遍历得到堆叠新息 σ^p 与 C(t)"""
    n = xhat.n
    sigma_p = np.zeros(3 * n)
    pi_blocks = np.zeros((n, 3, 3))
    visible = np.zeros(n, dtype=bool)
    for obs in observations:
        _check_index(obs, n)
        if not obs.visible:
            continue
        i = obs.landmark_id
        sigma_p[3 * i:3 * i + 3], pi_blocks[i] = innovation(obs, xhat, extrinsics)
        visible[i] = True
    return sigma_p, _matrix_from_blocks(pi_blocks, visible)


def triangulate(
    obs: LandmarkObservation,
    extrinsics: Sequence[CameraExtrinsics],
) -> Optional[np.ndarray]:
    """双目两射线最小二乘三角化，返回机体系坐标；射线近平行或交点在相机后方时返回 None"""
    if obs.modality is not Modality.STEREO_BEARING or not obs.visible:
        raise ValueError("三角化需要可见的双目观测")
    cam1, cam2 = _cameras(obs.modality, extrinsics)
    c1, d1 = cam1.p_c, cam1.r_c.m @ obs.y
    c2, d2 = cam2.p_c, cam2.r_c.m @ obs.y2
    a = np.column_stack([d1, -d2])
    ata = a.T @ a
    if np.linalg.det(ata) < 1e-12:
        return None
    lam = np.linalg.solve(ata, a.T @ (c2 - c1))
    if lam[0] <= 0.0 or lam[1] <= 0.0:
        return None
    return 0.5 * (c1 + lam[0] * d1 + c2 + lam[1] * d2)
