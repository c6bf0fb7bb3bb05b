"""
服务模块初始化
"""
from .artifacts import ArtifactStore
from .observer import ObserverService
from .simulation import SimulationService, run_monte_carlo, run_simulation, analyze_observability
from .euroc import EurocService, run_sequence, run_sequences

__all__ = [
    "ArtifactStore",
    "ObserverService",
    "SimulationService",
    "run_monte_carlo",
    "run_simulation",
    "analyze_observability",
    "EurocService",
    "run_sequence",
    "run_sequences",
]
