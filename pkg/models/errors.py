"""
观测器错误类型
"""


class VioError(Exception):
    """所有观测器错误的基类"""


class SingularMeasurementError(VioError, ValueError):
    """退化几何：路标与相机中心重合或方位向量近零，调用方应跳过该观测"""


class PropagationError(VioError, ArithmeticError):
    """积分或 Riccati 传播产生非有限数值"""


class CovarianceCollapseError(VioError, ArithmeticError):
    """P 失去正定性"""


class DatasetParseError(VioError, ValueError):
    """数据集文件格式错误，消息中带 path:line"""


class GroundTruthGapError(VioError, ValueError):
    """真值序列存在超过阈值的时间间隔"""


class InsufficientDataError(VioError, ValueError):
    """历史数据长度或重叠区间不足"""
