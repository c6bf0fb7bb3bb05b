"""
模型模块初始化
"""
from .errors import (
    VioError,
    SingularMeasurementError,
    PropagationError,
    CovarianceCollapseError,
    DatasetParseError,
    GroundTruthGapError,
    InsufficientDataError,
)
from .geometry import Rotation, GroupElement, TangentElement
from .state import (
    Modality,
    RigidBodyState,
    ImuSample,
    StructureConstants,
    CameraExtrinsics,
    CameraIntrinsics,
    LandmarkObservation,
    OutputMatrix,
    RiccatiState,
    GainSet,
    ObserverState,
    ErrorDiagnostics,
    GramianReport,
    PeCertificate,
)
from .dataset import GroundTruthSample, EurocRecords, CameraEpoch
from .scenario import NoiseConfig, InitialErrorConfig, ScenarioConfig, ObserverConfig, EurocConfig
from .run import CommandType, RunConfig, RunSummary, EurocResult

__all__ = [
    "VioError",
    "SingularMeasurementError",
    "PropagationError",
    "CovarianceCollapseError",
    "DatasetParseError",
    "GroundTruthGapError",
    "InsufficientDataError",
    "Rotation",
    "GroupElement",
    "TangentElement",
    "Modality",
    "RigidBodyState",
    "ImuSample",
    "StructureConstants",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "LandmarkObservation",
    "OutputMatrix",
    "RiccatiState",
    "GainSet",
    "ObserverState",
    "ErrorDiagnostics",
    "GramianReport",
    "PeCertificate",
    "GroundTruthSample",
    "EurocRecords",
    "CameraEpoch",
    "NoiseConfig",
    "InitialErrorConfig",
    "ScenarioConfig",
    "ObserverConfig",
    "EurocConfig",
    "CommandType",
    "RunConfig",
    "RunSummary",
    "EurocResult",
]
