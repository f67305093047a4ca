from .enums import (
    AblationAxis,
    Activation,
    FlipGranularity,
    OperatorKind,
    PhantomKind,
    RegularizerKind,
)
from .configs import (
    CriticArch,
    DataConfig,
    NoiseConfig,
    RadonGeometry,
    RegularizerArch,
    RunConfig,
    TrainConfig,
)
from .records import (
    BootstrapResult,
    DatasetMeta,
    EpochRecord,
    EvalReport,
    MetricRecord,
    MetricSummary,
    TrainHistory,
    TTestResult,
)

__all__ = [
    # Enums
    "AblationAxis",
    "Activation",
    "FlipGranularity",
    "OperatorKind",
    "PhantomKind",
    "RegularizerKind",
    # Configs
    "CriticArch",
    "DataConfig",
    "NoiseConfig",
    "RadonGeometry",
    "RegularizerArch",
    "RunConfig",
    "TrainConfig",
    # Records
    "BootstrapResult",
    "DatasetMeta",
    "EpochRecord",
    "EvalReport",
    "MetricRecord",
    "MetricSummary",
    "TrainHistory",
    "TTestResult",
]
