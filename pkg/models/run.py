"""
命令行运行配置与结果模型
"""
from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, model_validator

from config.settings import settings
from .scenario import EurocConfig, ObserverConfig, ScenarioConfig
from .state import Modality


class CommandType(str, Enum):
    """命令类型枚举"""
    SIMULATE = "simulate"
    EUROC = "euroc"
    OBSERVABILITY = "observability"


class RunConfig(BaseModel):
    """一次运行的完整配置（配置文件为唯一事实来源，命令行参数覆盖其中的键）"""
    command: CommandType = Field(..., description="命令")
    name: str = Field("default", description="运行名称，决定输出子目录")
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    observer: Optional[ObserverConfig] = Field(None, description="缺省时由噪声配置推导")
    euroc: EurocConfig = Field(default_factory=EurocConfig)
    dataset_path: Optional[str] = Field(None, description="EuRoC 序列目录")
    output_dir: str = Field(settings.OUTPUT_DIR, description="输出根目录")
    results_dir: str = Field(settings.RESULTS_DIR, description="EuRoC 结果 JSON 目录")
    runs: int = Field(1, ge=1, description="蒙特卡洛次数")
    modality: Optional[Modality] = Field(None, description="覆盖场景中的测量模态")
    gramian_delta: float = Field(settings.GRAMIAN_DELTA, gt=0.0, description="Gramian 窗口 δ (s)")
    gramian_mu: float = Field(settings.GRAMIAN_MU, gt=0.0, description="一致可观阈值 μ")
    gramian_landmarks: int = Field(1, ge=1, description="可观性分析使用的路标数")

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command == CommandType.EUROC and not self.dataset_path:
            raise ValueError("euroc 命令需要 dataset_path")
        if self.modality is not None:
            self.scenario = self.scenario.model_copy(update={"modality": self.modality})
            self.euroc = self.euroc.model_copy(update={"modality": self.modality})
        return self


class RunSummary(BaseModel):
    """仿真/可观性运行摘要"""
    command: CommandType
    name: str
    modality: Modality
    runs: int = 1
    final_att_deg: Optional[float] = Field(None, description="末时刻姿态 RMSE (deg)")
    final_pos_m: Optional[float] = Field(None, description="末时刻位置 RMSE (m)")
    final_vel_mps: Optional[float] = Field(None, description="末时刻机体系速度误差 RMSE (m/s)")
    final_grav_mps2: Optional[float] = Field(None, description="末时刻机体系重力误差 RMSE (m/s²)")
    gramian_min_eig: Optional[float] = Field(None, description="所有窗口中 Gramian 最小特征值")
    uniformly_observable: Optional[bool] = None
    runtime_s: float = 0.0
    output_dir: str = ""

    def one_line(self) -> str:
        if self.command == CommandType.OBSERVABILITY:
            return (f"{self.command.value} {self.modality.value}: Gramian 最小特征值 "
                    f"{self.gramian_min_eig:.3e}, 一致可观={self.uniformly_observable}")
        return (f"{self.command.value} {self.modality.value} ×{self.runs}: 末时刻 RMSE "
                f"att={self.final_att_deg:.3f}° pos={self.final_pos_m:.3f} m "
                f"vel={self.final_vel_mps:.3f} m/s grav={self.final_grav_mps2:.3f} m/s²")


class EurocResult(BaseModel):
    """EuRoC 序列评估结果"""
    sequence: str
    rms_position: float = Field(..., description="4-DOF 对齐后的位置 RMS (m)")
    runtime_s: float
    camera_epochs: int
    updates_enabled: bool
    series_csv: str = Field("", description="机体系速度/重力时间序列 CSV 路径")
    config: Dict[str, Any] = Field(default_factory=dict, description="配置回显")

    def one_line(self) -> str:
        return f"euroc {self.sequence}: RMS 位置误差 {self.rms_position:.3f} m ({self.runtime_s:.1f} s)"
