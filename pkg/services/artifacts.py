"""
运行产物存储服务 - CSV 时间序列与 JSON 摘要
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from config.settings import settings
from models import GramianReport

logger = logging.getLogger(__name__)

RMSE_HEADER = ["t_s", "att_deg", "pos_m", "vel_mps", "grav_mps2"]
GRAMIAN_HEADER = ["window_start_s", "min_eig", "max_eig", "flag"]
TRUTH_HEADER = ["t_s", "px_m", "py_m", "pz_m", "qw", "qx", "qy", "qz", "vx_mps", "vy_mps", "vz_mps"]
ESTIMATE_HEADER = TRUTH_HEADER + ["gx_mps2", "gy_mps2", "gz_mps2"]
BANDS_HEADER = [
    "t_s",
    "xv_x_mps", "xv_y_mps", "xv_z_mps", "band_v_x_mps", "band_v_y_mps", "band_v_z_mps",
    "xg_x_mps2", "xg_y_mps2", "xg_z_mps2", "band_g_x_mps2", "band_g_y_mps2", "band_g_z_mps2",
]
EUROC_SERIES_HEADER = [
    "t_s",
    "vb_est_x_mps", "vb_est_y_mps", "vb_est_z_mps", "vb_true_x_mps", "vb_true_y_mps", "vb_true_z_mps",
    "gb_est_x_mps2", "gb_est_y_mps2", "gb_est_z_mps2", "gb_true_x_mps2", "gb_true_y_mps2", "gb_true_z_mps2",
]


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.9e" % float(value)


class ArtifactStore:
    """产物存储服务类：每次运行一个子目录"""

    def __init__(self, root: Optional[str] = None):
        self.root = Path(root or settings.OUTPUT_DIR)
        self.root.mkdir(parents=True, exist_ok=True)

    def run_dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_csv(self, path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """写 CSV：首行为带单位的表头，浮点数统一 %.9e"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"{path.name}: 行长度 {len(row)} 与表头 {len(header)} 不一致")
                writer.writerow([_cell(v) for v in row])
                count += 1
        logger.info(f"💾 已写入 {path} ({count} 行)")
        return path

    def write_json(self, path: Path, model: BaseModel, exclude: Optional[set] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.model_dump_json(indent=2, exclude=exclude), encoding="utf-8")
        logger.info(f"💾 已写入 {path}")
        return path

    def write_rmse(self, name: str, times, att, pos, vel, grav) -> Path:
        rows = zip(times, att, pos, vel, grav)
        return self.write_csv(self.run_dir(name) / "rmse.csv", RMSE_HEADER, rows)

    def write_trajectory(self, name: str, result) -> List[Path]:
        """truth.csv 与 estimate.csv"""
        d = self.run_dir(name)
        truth = np.column_stack([result.times, result.truth_p, result.truth_q, result.truth_v])
        est = np.column_stack([result.times, result.est_p, result.est_q, result.est_v, result.est_g])
        return [
            self.write_csv(d / "truth.csv", TRUTH_HEADER, truth),
            self.write_csv(d / "estimate.csv", ESTIMATE_HEADER, est),
        ]

    def write_bands(self, name: str, result) -> Path:
        """机体系速度/重力误差及其 P 对角 3σ 带"""
        rows = np.column_stack([result.times, result.x_v, result.band_v, result.x_g, result.band_g])
        return self.write_csv(self.run_dir(name) / "bands.csv", BANDS_HEADER, rows)

    def write_euroc_series(self, path: Path, times, vb_est, vb_true, gb_est, gb_true) -> Path:
        """EuRoC 机体系 R̂ᵀv̂ 与 Rᵀv、R̂ᵀĝ 与 Rᵀg 的相机时刻序列"""
        rows = np.column_stack([times, vb_est, vb_true, gb_est, gb_true])
        return self.write_csv(path, EUROC_SERIES_HEADER, rows)

    def write_gramian(self, name: str, reports: Sequence[GramianReport]) -> Path:
        rows = [(r.window_start, r.min_eig, r.max_eig, r.uniformly_observable_flag) for r in reports]
        return self.write_csv(self.run_dir(name) / "gramian.csv", GRAMIAN_HEADER, rows)

    def write_summary(self, name: str, summary: BaseModel) -> Path:
        """summary.json；不写墙钟耗时以保证相同配置与种子下逐字节一致"""
        return self.write_json(self.run_dir(name) / "summary.json", summary, exclude={"runtime_s", "output_dir"})


def read_csv(path) -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))
