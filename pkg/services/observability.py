"""
可观性分析：状态转移矩阵、Gramian 窗口、Kalman 可观性矩阵、Φ 分解与单目持续激励证书
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Protocol, Sequence

import numpy as np
from scipy.linalg import expm

from config.settings import settings
from models import CameraExtrinsics, GramianReport, ImuSample, InsufficientDataError, PeCertificate, RigidBodyState
from .observer import build_A

logger = logging.getLogger(__name__)

MatrixSource = Callable[[float], np.ndarray]


class TrajectorySource(Protocol):
    def state_at(self, t: float) -> RigidBodyState: ...

    def imu_at(self, t: float) -> ImuSample: ...


@dataclass(frozen=True, eq=False)
class KalmanObservability:
    """常数对 (Ā, C̄) 的可观性矩阵"""
    matrix: np.ndarray
    rank: int
    gram_det: float


def _rk4_transition(a_of_t: MatrixSource, phi: np.ndarray, t0: float, t1: float, steps: int) -> np.ndarray:
    h = (t1 - t0) / steps
    for k in range(steps):
        t = t0 + k * h
        a_mid = a_of_t(t + 0.5 * h)
        k1 = a_of_t(t) @ phi
        k2 = a_mid @ (phi + 0.5 * h * k1)
        k3 = a_mid @ (phi + 0.5 * h * k2)
        k4 = a_of_t(t + h) @ (phi + h * k3)
        phi = phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return phi


def transition_matrix(a_of_t: MatrixSource, t0: float, t1: float, max_step: float = 0.005) -> np.ndarray:
    """dΦ/dt = A(t)Φ, Φ(t0, t0) = I"""
    if t1 < t0:
        raise ValueError(f"t1 ({t1}) 必须不小于 t0 ({t0})")
    phi = np.eye(a_of_t(t0).shape[0])
    if t1 == t0:
        return phi
    steps = max(1, int(np.ceil((t1 - t0) / max_step - 1e-9)))
    return _rk4_transition(a_of_t, phi, t0, t1, steps)


def _report(t: float, delta: float, w: np.ndarray, mu: float) -> GramianReport:
    w = 0.5 * (w + w.T)
    eig = np.linalg.eigvalsh(w)
    return GramianReport(
        window_start=t,
        delta=delta,
        w=w,
        min_eig=float(eig[0]),
        max_eig=float(eig[-1]),
        uniformly_observable_flag=bool(eig[0] >= mu),
    )


def _grid(t: float, delta: float, grid_dt: float) -> np.ndarray:
    k = max(1, int(round(delta / grid_dt)))
    return t + delta * np.arange(k + 1) / k


def _trapezoid_weights(taus: np.ndarray) -> np.ndarray:
    h = np.diff(taus)
    w = np.zeros(taus.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def gramian(
    a_of_t: MatrixSource,
    c_of_t: MatrixSource,
    t: float,
    delta: float = settings.GRAMIAN_DELTA,
    grid_dt: float = 0.05,
    substeps: int = 10,
    mu: float = settings.GRAMIAN_MU,
) -> GramianReport:
    """(1/δ)∫ΦᵀCᵀCΦ dτ，相机频率网格上的梯形求积"""
    if delta <= 0.0:
        raise ValueError(f"delta 必须为正: {delta}")
    taus = _grid(t, delta, grid_dt)
    weights = _trapezoid_weights(taus)
    phi = np.eye(a_of_t(t).shape[0])
    w = np.zeros_like(phi)
    for j, tau in enumerate(taus):
        if j > 0:
            phi = _rk4_transition(a_of_t, phi, taus[j - 1], tau, substeps)
        m = c_of_t(tau) @ phi
        w += weights[j] * (m.T @ m)
    return _report(t, delta, w / delta, mu)


def constant_pair(n: int):
    """(Ā, C̄)：零角速度下的 A 与 C̄ = [0, I_{3n}]"""
    a_bar = build_A(np.zeros(3), n)
    c_bar = np.hstack([np.zeros((3 * n, 6)), np.eye(3 * n)])
    return a_bar, c_bar


def stacked_observability_matrix(a_bar: np.ndarray, c_bar: np.ndarray, powers: int) -> np.ndarray:
    """[C̄; C̄Ā; C̄Ā²; …]"""
    blocks = []
    m = c_bar
    for _ in range(powers):
        blocks.append(m)
        m = m @ a_bar
    return np.vstack(blocks)


def kalman_observability_matrix(n: int) -> KalmanObservability:
    """𝒪 = [[0, I_n], [B_n, 0], [B̄_n, 0], 0, …]⊗I₃（状态顺序 v、g、路标）"""
    if n < 1:
        raise ValueError("n 必须 ≥ 1")
    rows = n * (n + 2)
    o = np.zeros((rows, n + 2))
    o[0:n, 2:] = np.eye(n)
    o[n:2 * n, 0] = 1.0
    o[2 * n:3 * n, 1] = 1.0
    matrix = np.kron(o, np.eye(3))
    rank = int(np.linalg.matrix_rank(matrix))
    gram_det = float(np.linalg.det(matrix.T @ matrix))
    return KalmanObservability(matrix=matrix, rank=rank, gram_det=gram_det)


def _t_matrix(rot: np.ndarray, n: int) -> np.ndarray:
    return np.kron(np.eye(n + 2), rot.T)


def verify_phi_factorization(trajectory: TrajectorySource, t0: float, t1: float, n: int = 1,
                             max_step: float = 0.005) -> float:
    """‖Φ_numeric − T(t1)exp(Ā(t1−t0))T(t0)ᵀ‖_F，T(t) = I_{n+2}⊗Rᵀ(t)"""
    phi = transition_matrix(lambda t: build_A(trajectory.imu_at(t).omega_b, n), t0, t1, max_step)
    a_bar, _ = constant_pair(n)
    r0 = trajectory.state_at(t0).rot.m
    r1 = trajectory.state_at(t1).rot.m
    factored = _t_matrix(r1, n) @ expm(a_bar * (t1 - t0)) @ _t_matrix(r0, n).T
    return float(np.linalg.norm(phi - factored))


def gramian_factorized(
    rotation_of_t: MatrixSource,
    c_of_t: MatrixSource,
    n: int,
    t: float,
    delta: float = settings.GRAMIAN_DELTA,
    grid_dt: float = 0.05,
    mu: float = settings.GRAMIAN_MU,
) -> GramianReport:
    """用 Φ(τ,t) = T(τ)exp(Ā(τ−t))T(t)ᵀ 计算 Gramian；Ā 幂零，Ā³ = 0"""
    a_bar, _ = constant_pair(n)
    a_bar2 = a_bar @ a_bar
    eye = np.eye(a_bar.shape[0])
    taus = _grid(t, delta, grid_dt)
    weights = _trapezoid_weights(taus)
    inner = np.zeros_like(a_bar)
    for j, tau in enumerate(taus):
        s = tau - t
        phi_bar = eye + s * a_bar + 0.5 * s * s * a_bar2
        m = c_of_t(tau) @ _t_matrix(rotation_of_t(tau), n) @ phi_bar
        inner += weights[j] * (m.T @ m)
    t0 = _t_matrix(rotation_of_t(t), n)
    return _report(t, delta, t0 @ inner @ t0.T / delta, mu)


def gramian_windows(
    report_at: Callable[[float], GramianReport],
    t_start: float,
    t_end: float,
    delta: float,
) -> List[GramianReport]:
    """从 t_start 起以 δ 为步长的不重叠窗口"""
    reports = []
    t = t_start
    while t + delta <= t_end + 1e-9:
        reports.append(report_at(t))
        t += delta
    if not reports:
        raise InsufficientDataError(f"时长 {t_end - t_start:.3f} s 不足一个窗口 δ = {delta} s")
    worst = min(r.min_eig for r in reports)
    logger.info(f"📊 Gramian 窗口 {len(reports)} 个, 最小特征值 {worst:.3e}")
    return reports


def mono_pe_certificate(
    times: np.ndarray,
    rotations: np.ndarray,
    bearings: np.ndarray,
    camera: CameraExtrinsics,
    delta_star: float = settings.PE_DELTA,
    mu_star: float = settings.PE_MU,
) -> PeCertificate:
    """(1/δ*)∫π(R(τ)R_c y_i(τ))dτ ⪰ μ*I₃ 对所有窗口成立

    bearings 为 (K, m, 3) 相机系单位向量，NaN 行表示该时刻不可见（π 记为 0）。
    """
    times = np.asarray(times, dtype=float)
    rotations = np.asarray(rotations, dtype=float)
    bearings = np.asarray(bearings, dtype=float)
    if bearings.ndim == 2:
        bearings = bearings[:, None, :]
    if times.size < 2 or times[-1] - times[0] < delta_star - 1e-9:
        raise InsufficientDataError(f"方位历史不足 δ* = {delta_star} s")

    u = np.einsum("kij,jl,kml->kmi", rotations, camera.r_c.m, bearings)
    visible = np.all(np.isfinite(u), axis=2)
    u = np.where(visible[..., None], u, 0.0)
    proj = np.where(visible[..., None, None], np.eye(3) - np.einsum("kmi,kmj->kmij", u, u), 0.0)

    h = np.diff(times)[:, None, None, None]
    cum = np.concatenate([np.zeros((1,) + proj.shape[1:]), np.cumsum(0.5 * h * (proj[1:] + proj[:-1]), axis=0)])

    worst = np.full(proj.shape[1], np.inf)
    for j in range(times.size):
        if times[j] + delta_star > times[-1] + 1e-9:
            break
        e = int(np.searchsorted(times, times[j] + delta_star - 1e-9))
        mean = (cum[e] - cum[j]) / delta_star
        worst = np.minimum(worst, np.linalg.eigvalsh(mean)[:, 0])
    return PeCertificate(passed=worst >= mu_star, min_eig=worst)


def window_summary(reports: Sequence[GramianReport]) -> float:
    return min(r.min_eig for r in reports)
