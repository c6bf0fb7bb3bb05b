"""
SE_{3+n}(3) 上的级联 VIO 观测器

预测：动力学副本 + 姿态新息 σ^R（左乘 exp(k_R[σ^R]ₓdt)）；
更新：由 Riccati 增益 L 提取 K_v、K_g、Γ（K_p = 0）做离散跳变。
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from config.settings import settings
from models import (
    CameraExtrinsics,
    ErrorDiagnostics,
    GainSet,
    GroupElement,
    ImuSample,
    LandmarkObservation,
    Modality,
    ObserverConfig,
    ObserverState,
    RiccatiState,
    RigidBodyState,
    Rotation,
)
from .dynamics import integrate_step
from .liegroup import exp_so3, skew, unvectorize, vectorize
from .measurements import assemble, triangulate
from .riccati import correct_P, gain_continuous, gain_L, predict_P, propagate_CRE_continuous, reset_block

logger = logging.getLogger(__name__)


@dataclass
class StiffnessMonitor:
    """连续模式修正项刚度告警，每个实例只告警一次"""
    limit: float = 0.5
    warned: bool = False

    def check(self, value: float) -> bool:
        if value > self.limit and not self.warned:
            logger.warning(f"⚠️ 连续模式修正项相对步长过大 ({value:.3f})，建议减小 dt 或增大 Q")
            self.warned = True
        return value > self.limit


def sigma_R(ghat, g_true) -> np.ndarray:
    """σ^R = ĝ × g"""
    return np.cross(np.asarray(ghat, dtype=float), np.asarray(g_true, dtype=float))


def build_A(imu, n: int) -> np.ndarray:
    """平移误差系统矩阵 A(t)

    左上 D = [[−[ω]ₓ, I], [0, −[ω]ₓ]]，左下 B_n⊗I₃，右下 I_n⊗(−[ω]ₓ)。
    """
    omega = imu.omega_b if isinstance(imu, ImuSample) else np.asarray(imu, dtype=float)
    a = np.kron(np.eye(n + 2), -skew(omega))
    a[0:3, 3:6] += np.eye(3)
    if n > 0:
        a[6:, 0:3] = np.tile(np.eye(3), (n, 1))
    return a


def extract_gains(
    l,
    rhat: Rotation,
    n: int,
    sigma_p: Optional[np.ndarray] = None,
    sigma_r: Optional[np.ndarray] = None,
) -> GainSet:
    """M = (I_{n+2}⊗R̂)L；K_v、K_g 取前两块行，K_p = 0，Γ = −M 的路标块行"""
    l = np.asarray(l, dtype=float)
    if l.shape != (3 * (n + 2), 3 * n):
        raise ValueError(f"L 维度应为 {(3 * (n + 2), 3 * n)}, 实际 {l.shape}")
    m = np.einsum("ij,bjk->bik", rhat.m, l.reshape(n + 2, 3, 3 * n)).reshape(3 * (n + 2), 3 * n)
    return GainSet(
        k_p=np.zeros((3, 3 * n)),
        k_v=m[0:3].copy(),
        k_g=m[3:6].copy(),
        gamma=-m[6:].copy(),
        sigma_p=np.zeros(3 * n) if sigma_p is None else np.asarray(sigma_p, dtype=float),
        sigma_r=np.zeros(3) if sigma_r is None else np.asarray(sigma_r, dtype=float),
    )


def _apply_correction(xh: GroupElement, gains: GainSet, scale: float) -> GroupElement:
    s = gains.sigma_p
    return GroupElement(
        xh.rot,
        xh.x1 + scale * (gains.k_p @ s),
        xh.x2 + scale * (gains.k_v @ s),
        xh.x3 + scale * (gains.k_g @ s),
        xh.xl + scale * unvectorize(gains.gamma @ s),
    )


def _propagate_estimate(os: ObserverState, xh: GroupElement, imu: ImuSample, dt: float,
                        imu_next: Optional[ImuSample]) -> GroupElement:
    sig_r = sigma_R(xh.x3, os.g_true)
    body = integrate_step(RigidBodyState(xh.rot, xh.x1, xh.x2, xh.x3, xh.xl, os.t), imu, dt, imu_next)
    q = exp_so3(os.k_r * dt * sig_r)
    return GroupElement(q @ body.rot, q @ body.p, q @ body.v, q @ body.g, q @ xh.xl)


def _effective_rate(imu: ImuSample, imu_next: Optional[ImuSample]) -> np.ndarray:
    if imu_next is None:
        return imu.omega_b
    return 0.5 * (imu.omega_b + imu_next.omega_b)


def _usable(os: ObserverState, observations: Sequence[LandmarkObservation]) -> List[LandmarkObservation]:
    return [o for o in observations if o.visible and os.initialized[o.landmark_id]]


def predict(os: ObserverState, imu: ImuSample, dt: float, imu_next: Optional[ImuSample] = None) -> ObserverState:
    """两帧之间的预测：估计沿动力学副本传播，P 按 Ṗ = AP + PAᵀ + V 传播"""
    xhat = _propagate_estimate(os, os.xhat, imu, dt, imu_next)
    riccati = predict_P(os.riccati, build_A(_effective_rate(imu, imu_next), os.n), dt)
    return ObserverState(xhat, riccati, os.k_r, os.g_true, os.initialized, os.t + dt)


def predict_continuous(
    os: ObserverState,
    imu: ImuSample,
    dt: float,
    observations: Sequence[LandmarkObservation],
    extrinsics: Sequence[CameraExtrinsics] = (),
    imu_next: Optional[ImuSample] = None,
    substeps: int = 1,
    monitor: Optional[StiffnessMonitor] = None,
) -> ObserverState:
    """连续测量模式：L = PCᵀQ⁻¹ 的修正项随时间注入，P 按完整 CRE 传播"""
    monitor = StiffnessMonitor() if monitor is None else monitor
    n = os.n
    xh = os.xhat
    c = np.zeros((3 * n, 3 * (n + 2)))
    usable = _usable(os, observations)
    if usable:
        sigma_p, out = assemble(usable, xh, extrinsics)
        l = gain_continuous(os.riccati, out)
        monitor.check(dt * float(np.linalg.norm(l @ out.c, 2)))
        gains = extract_gains(l, xh.rot, n, sigma_p, sigma_R(xh.x3, os.g_true))
        xh = _apply_correction(xh, gains, dt)
        c = out.c
    xhat = _propagate_estimate(os, xh, imu, dt, imu_next)
    a = build_A(_effective_rate(imu, imu_next), n)
    riccati = propagate_CRE_continuous(os.riccati, a, c, dt, substeps)
    return ObserverState(xhat, riccati, os.k_r, os.g_true, os.initialized, os.t + dt)


def update_with_gains(
    os: ObserverState,
    observations: Sequence[LandmarkObservation],
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> Tuple[ObserverState, Optional[GainSet]]:
    """离散更新，同时返回本次使用的增益；无可用观测时原样返回"""
    usable = _usable(os, observations)
    if not usable:
        return os, None
    xh = os.xhat
    sigma_p, out = assemble(usable, xh, extrinsics)
    l = gain_L(os.riccati, out)
    gains = extract_gains(l, xh.rot, os.n, sigma_p, sigma_R(xh.x3, os.g_true))
    xhat = _apply_correction(xh, gains, 1.0)
    riccati = correct_P(os.riccati, l, out)
    return ObserverState(xhat, riccati, os.k_r, os.g_true, os.initialized, os.t), gains


def update(
    os: ObserverState,
    observations: Sequence[LandmarkObservation],
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> ObserverState:
    return update_with_gains(os, observations, extrinsics)[0]


def init_landmark(
    os: ObserverState,
    obs: LandmarkObservation,
    assumed_depth: Optional[float] = None,
    extrinsics: Sequence[CameraExtrinsics] = (),
) -> ObserverState:
    """由首次观测初始化路标估计

    相对位置直接反投影；单目沿射线取假设深度 d₀；双目先做两射线三角化，
    失败时退回 d₀。
    """
    i = obs.landmark_id
    if os.initialized[i]:
        raise ValueError(f"路标 {i} 已初始化")
    if not obs.visible:
        raise ValueError(f"路标 {i} 不可见，无法初始化")
    d0 = settings.ASSUMED_DEPTH if assumed_depth is None else assumed_depth
    if obs.modality is Modality.RELATIVE_POSITION:
        body = obs.y
    else:
        body = triangulate(obs, extrinsics) if obs.modality is Modality.STEREO_BEARING else None
        if body is None:
            cam = extrinsics[0]
            body = cam.p_c + d0 * (cam.r_c.m @ obs.y)
    xh = os.xhat
    xl = xh.xl.copy()
    xl[:, i] = xh.x1 + xh.rot.m @ body
    mask = os.initialized.copy()
    mask[i] = True
    xhat = GroupElement(xh.rot, xh.x1, xh.x2, xh.x3, xl)
    return ObserverState(xhat, os.riccati, os.k_r, os.g_true, mask, os.t)


def release_landmark(os: ObserverState, i: int, sigma_l: float = settings.P0_SIGMA_L) -> ObserverState:
    """释放路标槽位：清除初始化标记并重置对应的 P 块"""
    mask = os.initialized.copy()
    mask[i] = False
    return ObserverState(os.xhat, reset_block(os.riccati, i, sigma_l), os.k_r, os.g_true, mask, os.t)


def _quadratic_form(p: np.ndarray, x: np.ndarray) -> float:
    try:
        return float(x @ cho_solve(cho_factor(p), x))
    except LinAlgError:
        return float(x @ np.linalg.solve(p, x))


def compute_error_diagnostics(
    truth: RigidBodyState,
    os: ObserverState,
    mask: Optional[np.ndarray] = None,
) -> ErrorDiagnostics:
    """平移误差 x = [Rᵀṽ; Rᵀg̃; (Rᵀ(1ᵀ⊗p̃ − p̃_L))^∨]、ğ = R̃ᵀg 及 Lyapunov 函数

    mask 为 False 的路标块置零（未分配或未初始化的槽位）。
    """
    xh = os.xhat
    if truth.n != xh.n:
        raise ValueError(f"路标数不一致: 真值 {truth.n}, 估计 {xh.n}")
    r = truth.rot.m
    r_tilde = r @ xh.rot.m.T
    v_t = truth.v - r_tilde @ xh.x2
    g_t = truth.g - r_tilde @ xh.x3
    p_t = truth.p - r_tilde @ xh.x1
    pl_t = truth.landmarks - r_tilde @ xh.xl
    x3 = r.T @ (p_t[:, None] - pl_t)
    if mask is not None:
        x3 = np.where(np.asarray(mask, dtype=bool)[None, :], x3, 0.0)
    x = np.concatenate([r.T @ v_t, r.T @ g_t, vectorize(x3)])
    breve_g = r_tilde.T @ truth.g
    return ErrorDiagnostics(
        x=x,
        breve_g=breve_g,
        lyap_vp=_quadratic_form(os.riccati.p, x),
        lyap_l1=0.5 * float(np.sum((truth.g - breve_g) ** 2)),
        lyap_l2=0.5 * float(np.sum((truth.g + breve_g) ** 2)),
    )


def consistent_estimate(truth: RigidBodyState, r_hat: Rotation) -> GroupElement:
    """给定 R̂，构造使 x ≡ 0 的估计（平移状态由真值喂入）"""
    rt = (truth.rot.m @ r_hat.m.T).T
    return GroupElement(r_hat, rt @ truth.p, rt @ truth.v, rt @ truth.g, rt @ truth.landmarks)


def initial_gravity_estimate(imu: ImuSample, r_hat: Rotation, stationary: bool,
                             magnitude: float = settings.GRAVITY_MAGNITUDE) -> np.ndarray:
    """静止起步时 ĝ(0) 取 −R̂(0)a(0) 方向，否则取默认重力方向"""
    if stationary:
        d = -(r_hat.m @ imu.a_b)
        nrm = np.linalg.norm(d)
        if nrm > 0.0:
            return magnitude * d / nrm
        logger.warning("⚠️ 首个加速度计采样为零，退回默认重力方向")
    return magnitude * np.asarray(settings.GRAVITY_DIRECTION, dtype=float)


class ObserverService:
    """观测器服务：持有调参、模态与相机外参，驱动一次估计运行"""

    def __init__(
        self,
        config: ObserverConfig,
        modality: Modality,
        extrinsics: Sequence[CameraExtrinsics] = (),
        g_true=None,
    ):
        self.config = config
        self.modality = Modality(modality)
        self.extrinsics = tuple(extrinsics)
        if g_true is None:
            g_true = settings.GRAVITY_MAGNITUDE * np.asarray(settings.GRAVITY_DIRECTION, dtype=float)
        self.g_true = np.asarray(g_true, dtype=float)
        self.stiffness = StiffnessMonitor()

    def initial_riccati(self, n: int) -> RiccatiState:
        cfg = self.config
        p0 = np.diag(np.concatenate([
            np.full(3, cfg.p0_sigma_v ** 2),
            np.full(3, cfg.p0_sigma_g ** 2),
            np.full(3 * n, cfg.p0_sigma_l ** 2),
        ]))
        v = np.diag(np.concatenate([
            np.full(3, cfg.v_velocity),
            np.full(3, cfg.v_gravity),
            np.full(3 * n, cfg.v_landmark),
        ]))
        q = cfg.measurement_variance(self.modality) * np.eye(3 * n)
        return RiccatiState.create(p0, v, q)

    def create_state(self, xhat: GroupElement, t0: float = 0.0) -> ObserverState:
        if xhat.n < 1:
            raise ValueError("观测器至少需要一个路标槽位")
        return ObserverState(
            xhat=xhat,
            riccati=self.initial_riccati(xhat.n),
            k_r=self.config.k_r,
            g_true=self.g_true,
            initialized=np.zeros(xhat.n, dtype=bool),
            t=t0,
        )

    def predict(
        self,
        os: ObserverState,
        imu: ImuSample,
        dt: float,
        imu_next: Optional[ImuSample] = None,
        observations: Sequence[LandmarkObservation] = (),
    ) -> ObserverState:
        if self.config.continuous:
            return predict_continuous(os, imu, dt, observations, self.extrinsics, imu_next, monitor=self.stiffness)
        return predict(os, imu, dt, imu_next)

    def update(
        self,
        os: ObserverState,
        observations: Sequence[LandmarkObservation],
    ) -> Tuple[ObserverState, Optional[GainSet]]:
        if self.config.continuous:
            return os, None
        return update_with_gains(os, observations, self.extrinsics)

    def init_landmark(self, os: ObserverState, obs: LandmarkObservation) -> ObserverState:
        return init_landmark(os, obs, self.config.assumed_depth, self.extrinsics)

    def release_landmark(self, os: ObserverState, i: int) -> ObserverState:
        return release_landmark(os, i, self.config.p0_sigma_l)
