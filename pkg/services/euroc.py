"""
EuRoC 序列评估服务：CSV 解析、真值插值、虚拟路标测量合成、4-DOF 对齐 RMS
"""
import concurrent.futures
import csv
import logging
import time
from bisect import bisect_left
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation as SciRotation

from config.settings import settings
from models import (
    CameraEpoch,
    CameraExtrinsics,
    DatasetParseError,
    EurocConfig,
    EurocRecords,
    EurocResult,
    GroundTruthGapError,
    GroupElement,
    GroundTruthSample,
    ImuSample,
    InsufficientDataError,
    ObserverConfig,
    RigidBodyState,
    Rotation,
    SingularMeasurementError,
)
from .artifacts import ArtifactStore
from .measurements import measure
from .observer import ObserverService
from .simulation import LandmarkTracker, corrupt, euroc_extrinsics, select_visible

logger = logging.getLogger(__name__)

IMU_COLUMNS = 7
GT_COLUMNS = 17
QUATERNION_TOLERANCE = 1e-3


def _read_rows(path, columns: int) -> List[Tuple[int, int, np.ndarray]]:
    """返回 (行号, 时间戳 ns, 其余数值列)；跳过 # 开头的表头与空行"""
    path = Path(path)
    rows = []
    last_ns = None
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) < columns:
                raise DatasetParseError(f"{path}:{lineno}: 需要 {columns} 列, 实际 {len(row)} 列")
            try:
                ns = int(row[0].strip())
                values = np.array([float(c) for c in row[1:columns]])
            except ValueError as e:
                raise DatasetParseError(f"{path}:{lineno}: 无法解析数值 ({e})") from e
            if not np.all(np.isfinite(values)):
                raise DatasetParseError(f"{path}:{lineno}: 包含非有限数值")
            if last_ns is not None and ns <= last_ns:
                raise DatasetParseError(f"{path}:{lineno}: 时间戳未严格递增")
            last_ns = ns
            rows.append((lineno, ns, values))
    return rows


def _imu_samples(rows, t0_ns: int) -> List[ImuSample]:
    return [ImuSample(v[0:3], v[3:6], (ns - t0_ns) * 1e-9) for _, ns, v in rows]


def _gt_samples(rows, t0_ns: int, path) -> List[GroundTruthSample]:
    out = []
    for lineno, ns, v in rows:
        q = v[3:7]
        nrm = float(np.linalg.norm(q))
        if abs(nrm - 1.0) > QUATERNION_TOLERANCE:
            raise DatasetParseError(f"{path}:{lineno}: 四元数模长 {nrm:.6f} 偏离 1")
        w, x, y, z = q / nrm
        rot = Rotation(SciRotation.from_quat([x, y, z, w]).as_matrix())
        out.append(GroundTruthSample((ns - t0_ns) * 1e-9, v[0:3], rot, v[7:10], v[10:13], v[13:16]))
    return out


def parse_imu_csv(path, t0_ns: int = 0) -> List[ImuSample]:
    """imu0/data.csv：timestamp [ns], w_x, w_y, w_z [rad/s], a_x, a_y, a_z [m/s²]"""
    return _imu_samples(_read_rows(path, IMU_COLUMNS), t0_ns)


def parse_groundtruth_csv(path, t0_ns: int = 0) -> List[GroundTruthSample]:
    """state_groundtruth_estimate0/data.csv：p、q(w,x,y,z)、v、b_w、b_a"""
    return _gt_samples(_read_rows(path, GT_COLUMNS), t0_ns, path)


def load_sequence(root) -> EurocRecords:
    """读取 ASL 目录；以首个真值样本为 t = 0"""
    root = Path(root)
    imu_path = root / "mav0" / "imu0" / "data.csv"
    gt_path = root / "mav0" / "state_groundtruth_estimate0" / "data.csv"
    for p in (imu_path, gt_path):
        if not p.is_file():
            raise DatasetParseError(f"{p}: 文件不存在")
    gt_rows = _read_rows(gt_path, GT_COLUMNS)
    imu_rows = _read_rows(imu_path, IMU_COLUMNS)
    if not gt_rows:
        raise DatasetParseError(f"{gt_path}: 没有真值数据")
    t0_ns = gt_rows[0][1]
    records = EurocRecords(_imu_samples(imu_rows, t0_ns), _gt_samples(gt_rows, t0_ns, gt_path), root.name)
    logger.info(f"✅ 序列 {records.sequence_name} 加载完成: IMU {len(records.imu)} 条, 真值 {len(records.gt)} 条")
    return records


class GroundTruthInterpolator:
    """真值插值：位置/速度/偏置线性，姿态沿最短弧"""

    def __init__(self, gt: Sequence[GroundTruthSample], gap_limit: float = settings.GT_GAP_LIMIT):
        if not gt:
            raise InsufficientDataError("真值序列为空")
        self.gt = list(gt)
        self.times = [s.t for s in self.gt]
        self.gap_limit = gap_limit

    @property
    def t_start(self) -> float:
        return self.times[0]

    @property
    def t_end(self) -> float:
        return self.times[-1]

    def __call__(self, t: float) -> GroundTruthSample:
        if t < self.times[0] or t > self.times[-1]:
            raise GroundTruthGapError(f"t = {t:.6f} s 超出真值范围 [{self.times[0]:.3f}, {self.times[-1]:.3f}]")
        j = bisect_left(self.times, t)
        if self.times[j] == t:
            return self.gt[j]
        a, b = self.gt[j - 1], self.gt[j]
        gap = b.t - a.t
        if gap > self.gap_limit:
            raise GroundTruthGapError(f"t = {t:.6f} s 处真值间隔 {gap:.3f} s 超过 {self.gap_limit} s")
        s = (t - a.t) / gap
        rel = SciRotation.from_matrix(a.rot.m.T @ b.rot.m).as_rotvec()
        rot = a.rot @ Rotation(SciRotation.from_rotvec(s * rel).as_matrix())

        def lerp(x: np.ndarray, y: np.ndarray) -> np.ndarray:
            return (1.0 - s) * x + s * y

        return GroundTruthSample(t, lerp(a.p, b.p), rot, lerp(a.v, b.v), lerp(a.bias_w, b.bias_w),
                                 lerp(a.bias_a, b.bias_a))


def interpolate_groundtruth(records: EurocRecords, t: float) -> GroundTruthSample:
    return GroundTruthInterpolator(records.gt)(t)


def virtual_landmarks(records: EurocRecords, cfg: EurocConfig, rng: np.random.Generator) -> np.ndarray:
    """真值轨迹包围盒外扩后的各面上均匀布点，面密度与仿真环境一致"""
    pos = np.array([s.p for s in records.gt])
    lo = pos.min(axis=0) - cfg.inflate
    hi = pos.max(axis=0) + cfg.inflate
    axes = (0, 1, 2) if cfg.include_floor_ceiling else (0, 1)
    chunks = []
    for a in axes:
        others = [b for b in range(3) if b != a]
        area = float(np.prod(hi[others] - lo[others]))
        count = int(round(cfg.landmark_density * area))
        for side in (lo[a], hi[a]):
            pts = np.empty((count, 3))
            pts[:, a] = side
            pts[:, others] = rng.uniform(lo[others], hi[others], size=(count, 2))
            chunks.append(pts)
    landmarks = np.vstack(chunks).T
    logger.info(f"📊 虚拟路标 {landmarks.shape[1]} 个, 包围盒 {np.round(lo, 2)} – {np.round(hi, 2)}")
    return landmarks


def truth_state(sample: GroundTruthSample, g: np.ndarray) -> RigidBodyState:
    return RigidBodyState(sample.rot, sample.p, sample.v, g, t=sample.t)


def synthesize_measurements(
    records: EurocRecords,
    landmarks: np.ndarray,
    cfg: EurocConfig,
    rng: np.random.Generator,
    extrinsics: Sequence[CameraExtrinsics] = (),
    times: Optional[Sequence[float]] = None,
) -> List[CameraEpoch]:
    """在相机时刻插值真值并生成带噪测量；观测的 landmark_id 为世界路标编号

    真值间隔过大的时刻被跳过。
    """
    extrinsics = tuple(extrinsics) or euroc_extrinsics()
    interp = GroundTruthInterpolator(records.gt)
    g = settings.GRAVITY_MAGNITUDE * np.asarray(settings.GRAVITY_DIRECTION, dtype=float)
    if times is None:
        t_end = interp.t_end if cfg.max_duration is None else min(interp.t_end, cfg.max_duration)
        times = np.arange(0.0, t_end + 1e-9, 1.0 / cfg.cam_rate)
    epochs = []
    skipped = 0
    for t in times:
        try:
            truth = truth_state(interp(float(t)), g)
        except GroundTruthGapError:
            skipped += 1
            continue
        ids = select_visible(truth, landmarks, cfg, extrinsics[0])
        local = truth.with_landmarks(landmarks[:, ids])
        obs = []
        for j, w in enumerate(ids):
            try:
                clean = measure(local, j, cfg.modality, extrinsics)
            except SingularMeasurementError as e:
                logger.warning(f"⚠️ 跳过路标 {w} 的退化观测: {e}")
                continue
            obs.append(corrupt(clean, cfg.noise, rng).with_id(int(w)))
        epochs.append(CameraEpoch(float(t), truth, obs))
    if skipped:
        logger.warning(f"⚠️ {skipped} 个相机时刻落在真值间隔内，已跳过")
    return epochs


def _rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def align_and_rms(times, est_p, gt_p, window: float = settings.ALIGN_WINDOW) -> float:
    """在前 window 秒上拟合绕 z 轴偏航 + 平移，作用于整条估计轨迹后返回位置 RMS"""
    times = np.asarray(times, dtype=float)
    est_p = np.asarray(est_p, dtype=float)
    gt_p = np.asarray(gt_p, dtype=float)
    if est_p.shape != gt_p.shape or est_p.shape != (times.size, 3):
        raise ValueError(f"轨迹维度不一致: times {times.shape}, est {est_p.shape}, gt {gt_p.shape}")
    sel = times <= times[0] + window + 1e-9 if times.size else np.zeros(0, dtype=bool)
    if np.count_nonzero(sel) < 2:
        raise InsufficientDataError(f"对齐窗口 {window} s 内样本不足")
    e_mean = est_p[sel].mean(axis=0)
    g_mean = gt_p[sel].mean(axis=0)
    e = est_p[sel] - e_mean
    g = gt_p[sel] - g_mean
    yaw = np.arctan2(np.sum(e[:, 0] * g[:, 1] - e[:, 1] * g[:, 0]), np.sum(e[:, 0] * g[:, 0] + e[:, 1] * g[:, 1]))
    rz = _rot_z(yaw)
    shift = g_mean - rz @ e_mean
    aligned = est_p @ rz.T + shift
    return float(np.sqrt(np.mean(np.sum((aligned - gt_p) ** 2, axis=1))))


def _compensated(sample: ImuSample, bias: Optional[GroundTruthSample]) -> ImuSample:
    if bias is None:
        return sample
    return ImuSample(sample.omega_b - bias.bias_w, sample.a_b - bias.bias_a, sample.t)


class EurocService:
    """单序列评估：真值驱动的测量合成 + 观测器 + 4-DOF 对齐 RMS"""

    def __init__(self, cfg: EurocConfig, observer_config: Optional[ObserverConfig] = None,
                 results_dir: Optional[str] = None):
        self.cfg = cfg
        self.observer_config = observer_config
        self.results_dir = results_dir or settings.RESULTS_DIR
        self.extrinsics = euroc_extrinsics()
        self.g = settings.GRAVITY_MAGNITUDE * np.asarray(settings.GRAVITY_DIRECTION, dtype=float)

    def _imu_window(self, records: EurocRecords, interp: GroundTruthInterpolator) -> List[ImuSample]:
        t_end = interp.t_end if self.cfg.max_duration is None else min(interp.t_end, self.cfg.max_duration)
        imu = [s for s in records.imu if interp.t_start <= s.t <= t_end]
        if len(imu) < 2:
            raise InsufficientDataError("真值时间范围内的 IMU 数据不足两条")
        if not self.cfg.compensate_biases:
            return imu
        out = []
        for s in imu:
            try:
                out.append(_compensated(s, interp(s.t)))
            except GroundTruthGapError:
                out.append(s)
        return out

    def run(self, root) -> EurocResult:
        cfg = self.cfg
        started = time.perf_counter()
        records = load_sequence(root)
        interp = GroundTruthInterpolator(records.gt)
        rng = np.random.default_rng(cfg.seed)
        landmarks = virtual_landmarks(records, cfg, rng)
        imu = self._imu_window(records, interp)

        imu_rate = 1.0 / float(np.median(np.diff([s.t for s in imu])))
        per_frame = max(1, int(round(imu_rate / cfg.cam_rate)))
        epoch_idx = list(range(per_frame, len(imu), per_frame))
        epochs = synthesize_measurements(records, landmarks, cfg, rng, self.extrinsics,
                                         [imu[k].t for k in epoch_idx])
        by_time = {e.t: e for e in epochs}

        observer_config = self.observer_config or ObserverConfig.from_noise(cfg.noise, imu_rate)
        service = ObserverService(observer_config, cfg.modality, self.extrinsics, self.g)
        first = interp(imu[0].t)
        xhat0 = GroupElement(first.rot, first.p, first.v, self.g, np.zeros((3, cfg.max_visible)))
        os = service.create_state(xhat0, imu[0].t)
        tracker = LandmarkTracker(cfg.max_visible)

        logger.info(f"🚀 序列 {records.sequence_name} 评估开始: 模态 {cfg.modality.value}, "
                    f"{len(epochs)} 个相机时刻, 更新{'开启' if cfg.updates_enabled else '关闭'}")
        times, est, gt = [], [], []
        vb_est, vb_true, gb_est, gb_true = [], [], [], []
        for k in range(len(imu) - 1):
            os = service.predict(os, imu[k], imu[k + 1].t - imu[k].t, imu[k + 1])
            epoch = by_time.get(imu[k + 1].t)
            if epoch is None:
                continue
            if cfg.updates_enabled:
                os = self._update(service, os, tracker, epoch)
            times.append(epoch.t)
            est.append(os.xhat.x1)
            gt.append(epoch.truth.p)
            rt_hat, rt = os.xhat.rot.m.T, epoch.truth.rot.m.T
            vb_est.append(rt_hat @ os.xhat.x2)
            vb_true.append(rt @ epoch.truth.v)
            gb_est.append(rt_hat @ os.xhat.x3)
            gb_true.append(rt @ self.g)

        rms = align_and_rms(times, est, gt)
        store = ArtifactStore(self.results_dir)
        series = store.write_euroc_series(Path(self.results_dir) / f"{records.sequence_name}_series.csv",
                                          np.asarray(times), np.reshape(vb_est, (-1, 3)), np.reshape(vb_true, (-1, 3)),
                                          np.reshape(gb_est, (-1, 3)), np.reshape(gb_true, (-1, 3)))
        result = EurocResult(
            sequence=records.sequence_name,
            rms_position=rms,
            runtime_s=time.perf_counter() - started,
            camera_epochs=len(times),
            updates_enabled=cfg.updates_enabled,
            series_csv=str(series),
            config=cfg.model_dump(mode="json"),
        )
        store.write_json(Path(self.results_dir) / f"{records.sequence_name}.json", result)
        logger.info(f"✅ {result.one_line()}")
        return result

    @staticmethod
    def _update(service: ObserverService, os, tracker: LandmarkTracker, epoch: CameraEpoch):
        pairs, fresh, _ = tracker.assign([o.landmark_id for o in epoch.observations])
        slot_of = {w: s for s, w in pairs}
        fresh = set(fresh)
        observations = []
        for obs in epoch.observations:
            slot = slot_of.get(obs.landmark_id)
            if slot is None:
                continue
            obs = obs.with_id(slot)
            if slot in fresh or not os.initialized[slot]:
                if os.initialized[slot]:
                    os = service.release_landmark(os, slot)
                os = service.init_landmark(os, obs)
            observations.append(obs)
        os, _ = service.update(os, observations)
        return os


def run_sequence(root, cfg: EurocConfig, observer_config: Optional[ObserverConfig] = None,
                 results_dir: Optional[str] = None) -> EurocResult:
    return EurocService(cfg, observer_config, results_dir).run(root)


def _run_one(args) -> EurocResult:
    return run_sequence(*args)


def run_sequences(roots: Sequence, cfg: EurocConfig, observer_config: Optional[ObserverConfig] = None,
                  results_dir: Optional[str] = None, threads: Optional[int] = None) -> List[EurocResult]:
    """多个序列并行评估，结果按输入顺序返回"""
    jobs = [(root, cfg, observer_config, results_dir) for root in roots]
    cap = settings.THREADS if threads is None else threads
    workers = max(1, min(cap if cap > 0 else len(jobs), len(jobs)))
    if workers == 1:
        return [_run_one(job) for job in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_one, jobs))
