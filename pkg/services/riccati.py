"""
Riccati 协方差传播与离散预测/校正
"""
import logging
from typing import Callable, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from config.settings import settings
from models import CovarianceCollapseError, OutputMatrix, PropagationError, RiccatiState

logger = logging.getLogger(__name__)

MatrixLike = Union[OutputMatrix, np.ndarray]


def _as_matrix(c: MatrixLike) -> np.ndarray:
    return c.c if isinstance(c, OutputMatrix) else np.asarray(c, dtype=float)


def _rk4(f: Callable[[np.ndarray], np.ndarray], p: np.ndarray, dt: float, substeps: int) -> np.ndarray:
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(p)
        k2 = f(p + 0.5 * h * k1)
        k3 = f(p + 0.5 * h * k2)
        k4 = f(p + h * k3)
        p = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p


def _symmetrized(p: np.ndarray, what: str) -> np.ndarray:
    p = 0.5 * (p + p.T)
    if not np.all(np.isfinite(p)):
        raise PropagationError(f"{what} 产生非有限数值")
    return p


def _check_a(rs: RiccatiState, a: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0.0:
        raise ValueError(f"dt 必须为正: {dt}")
    a = np.asarray(a, dtype=float)
    if a.shape != rs.p.shape:
        raise ValueError(f"A 维度 {a.shape} 与 P 维度 {rs.p.shape} 不一致")
    return a


def _check_c(rs: RiccatiState, c: np.ndarray):
    if c.shape != (rs.q_noise.shape[0], rs.dim):
        raise ValueError(f"C 维度 {c.shape} 与 Q {rs.q_noise.shape}、P {rs.p.shape} 不一致")


def predict_P(rs: RiccatiState, a, dt: float, substeps: int = 1) -> RiccatiState:
    """Ṗ = AP + PAᵀ + V"""
    a = _check_a(rs, a, dt)
    v = rs.v_noise
    p = _rk4(lambda p: a @ p + p @ a.T + v, rs.p, dt, substeps)
    return RiccatiState(_symmetrized(p, "predict_P"), rs.v_noise, rs.q_noise)


def gain_L(rs: RiccatiState, c: MatrixLike) -> np.ndarray:
    """L = PCᵀ(CPCᵀ + Q)⁻¹，经 Cholesky 分解求解"""
    c = _as_matrix(c)
    _check_c(rs, c)
    cp = c @ rs.p
    s = cp @ c.T + rs.q_noise
    cond = np.linalg.cond(s)
    if cond > settings.CONDITION_WARN:
        logger.warning(f"⚠️ 新息协方差病态: 条件数 {cond:.3e}")
    return cho_solve(cho_factor(s), cp).T


def gain_continuous(rs: RiccatiState, c: MatrixLike) -> np.ndarray:
    """连续模式增益 L = PCᵀQ⁻¹"""
    c = _as_matrix(c)
    _check_c(rs, c)
    return cho_solve(cho_factor(rs.q_noise), c @ rs.p).T


def correct_P(rs: RiccatiState, l, c: MatrixLike) -> RiccatiState:
    """P⁺ = (I − LC)P"""
    c = _as_matrix(c)
    l = np.asarray(l, dtype=float)
    if l.shape != (rs.dim, c.shape[0]) or c.shape[1] != rs.dim:
        raise ValueError(f"L {l.shape} 与 C {c.shape} 维度不一致")
    p = _symmetrized(rs.p - l @ (c @ rs.p), "correct_P")
    min_eig = float(np.linalg.eigvalsh(p)[0])
    if min_eig < -settings.COLLAPSE_TOLERANCE:
        raise CovarianceCollapseError(f"P 失去正定性: 最小特征值 {min_eig:.3e}")
    return RiccatiState(p, rs.v_noise, rs.q_noise)


def propagate_CRE_continuous(rs: RiccatiState, a, c: MatrixLike, dt: float, substeps: int = 1) -> RiccatiState:
    """完整 CRE: Ṗ = AP + PAᵀ − PCᵀQ⁻¹CP + V"""
    a = _check_a(rs, a, dt)
    c = _as_matrix(c)
    _check_c(rs, c)
    info = c.T @ cho_solve(cho_factor(rs.q_noise), c)
    v = rs.v_noise
    p = _rk4(lambda p: a @ p + p @ a.T - p @ info @ p + v, rs.p, dt, substeps)
    return RiccatiState(_symmetrized(p, "propagate_CRE_continuous"), rs.v_noise, rs.q_noise)


def eigen_bounds(rs: RiccatiState) -> Tuple[float, float]:
    """P 的最小/最大特征值"""
    eig = np.linalg.eigvalsh(rs.p)
    return float(eig[0]), float(eig[-1])


def reset_block(rs: RiccatiState, i: int, sigma: float) -> RiccatiState:
    """重置第 i 个路标块：清除互协方差，对角置 σ²I"""
    idx = slice(6 + 3 * i, 9 + 3 * i)
    p = rs.p.copy()
    p[idx, :] = 0.0
    p[:, idx] = 0.0
    p[idx, idx] = sigma ** 2 * np.eye(3)
    return RiccatiState(p, rs.v_noise, rs.q_noise)
