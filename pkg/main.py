"""
VIO 观测器命令行入口：simulate / euroc / observability
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from config.settings import settings
from models import (
    CommandType,
    CovarianceCollapseError,
    DatasetParseError,
    GroundTruthGapError,
    InsufficientDataError,
    Modality,
    PropagationError,
    RunConfig,
    RunSummary,
    SingularMeasurementError,
)
from services import ArtifactStore, analyze_observability, run_monte_carlo, run_sequence
from services.simulation import run_gramian

# 配置日志
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout)
    ]
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lie-vio", description="SE_{3+n}(3) 上的 VIO 观测器实验")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in CommandType:
        p = sub.add_parser(command.value)
        p.add_argument("--config", help="运行配置文件 (YAML/JSON)")
        p.add_argument("--name", help="运行名称（输出子目录）")
        p.add_argument("--seed", type=int, help="随机种子")
        p.add_argument("--runs", type=int, help="蒙特卡洛次数")
        p.add_argument("--modality", choices=[m.value for m in Modality], help="测量模态")
        p.add_argument("--out", help="输出目录")
        if command is CommandType.OBSERVABILITY:
            p.add_argument("--stationary", action="store_true", help="静止平台")
        if command is CommandType.EUROC:
            p.add_argument("--dataset", help="EuRoC 序列目录（含 mav0/）")
    return parser


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """配置文件为唯一事实来源；JSON 是 YAML 的子集"""
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: 顶层必须是键值映射")
    return data


def build_run_config(args: argparse.Namespace) -> RunConfig:
    data = load_config_file(args.config)
    data["command"] = args.command
    scenario = dict(data.get("scenario") or {})
    euroc = dict(data.get("euroc") or {})
    if args.name:
        data["name"] = args.name
    if args.seed is not None:
        scenario["seed"] = args.seed
        euroc["seed"] = args.seed
    if args.runs is not None:
        data["runs"] = args.runs
    if args.modality:
        data["modality"] = args.modality
    if args.out:
        data["output_dir"] = args.out
        data["results_dir"] = args.out
    if getattr(args, "stationary", False):
        scenario["stationary"] = True
    if getattr(args, "dataset", None):
        data["dataset_path"] = args.dataset
    data["scenario"] = scenario
    data["euroc"] = euroc
    return RunConfig(**data)


def cmd_simulate(cfg: RunConfig) -> RunSummary:
    started = time.perf_counter()
    mc = run_monte_carlo(cfg.scenario, cfg.runs, cfg.observer)
    store = ArtifactStore(cfg.output_dir)
    store.write_rmse(cfg.name, mc.times, mc.rmse_att, mc.rmse_pos, mc.rmse_vel, mc.rmse_grav)
    first = mc.runs[0]
    store.write_trajectory(cfg.name, first)
    store.write_bands(cfg.name, first)
    try:
        reports = run_gramian(first, cfg.scenario.slots, cfg.gramian_delta, cfg.gramian_mu)
    except InsufficientDataError as e:
        logger.warning(f"⚠️ 跳过 Gramian 统计: {e}")
        reports = []
    store.write_gramian(cfg.name, reports)
    summary = RunSummary(
        command=cfg.command,
        name=cfg.name,
        modality=cfg.scenario.modality,
        runs=cfg.runs,
        final_att_deg=float(mc.rmse_att[-1]),
        final_pos_m=float(mc.rmse_pos[-1]),
        final_vel_mps=float(mc.rmse_vel[-1]),
        final_grav_mps2=float(mc.rmse_grav[-1]),
        gramian_min_eig=min((r.min_eig for r in reports), default=None),
        uniformly_observable=all(r.uniformly_observable_flag for r in reports) if reports else None,
        runtime_s=time.perf_counter() - started,
        output_dir=str(store.run_dir(cfg.name)),
    )
    store.write_summary(cfg.name, summary)
    return summary


def cmd_observability(cfg: RunConfig) -> RunSummary:
    started = time.perf_counter()
    reports = analyze_observability(cfg.scenario, cfg.gramian_landmarks, cfg.gramian_delta, cfg.gramian_mu)
    store = ArtifactStore(cfg.output_dir)
    store.write_gramian(cfg.name, reports)
    summary = RunSummary(
        command=cfg.command,
        name=cfg.name,
        modality=cfg.scenario.modality,
        gramian_min_eig=float(np.min([r.min_eig for r in reports])),
        uniformly_observable=all(r.uniformly_observable_flag for r in reports),
        runtime_s=time.perf_counter() - started,
        output_dir=str(store.run_dir(cfg.name)),
    )
    store.write_summary(cfg.name, summary)
    return summary


def _validation_message(e: ValidationError) -> str:
    fields = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
    return "; ".join(fields)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_CONFIG

    try:
        cfg = build_run_config(args)
    except ValidationError as e:
        print(f"❌ 配置错误: {_validation_message(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, yaml.YAMLError) as e:
        print(f"❌ 配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG

    logger.info(f"🚀 执行 {cfg.command.value}: {cfg.name}")
    try:
        if cfg.command == CommandType.SIMULATE:
            line = cmd_simulate(cfg).one_line()
        elif cfg.command == CommandType.OBSERVABILITY:
            line = cmd_observability(cfg).one_line()
        else:
            line = run_sequence(Path(cfg.dataset_path), cfg.euroc, cfg.observer, cfg.results_dir).one_line()
    except (DatasetParseError, GroundTruthGapError, InsufficientDataError, OSError) as e:
        print(f"❌ 数据错误: {e}", file=sys.stderr)
        return EXIT_DATA
    except (PropagationError, CovarianceCollapseError, SingularMeasurementError, ArithmeticError,
            np.linalg.LinAlgError) as e:
        print(f"❌ 数值错误: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"❌ 运行失败: {e}")
        print(f"❌ 运行失败: {e}", file=sys.stderr)
        return EXIT_OTHER

    print(line)
    logger.info("✅ 完成")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
