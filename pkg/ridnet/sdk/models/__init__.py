"""Configuration models and canonical enums."""

from .canonical_types import (
    ActivationKind,
    AuditScope,
    LossMode,
    Padding,
    Preset,
    Protocol,
    SweepAxis,
    ThetaMode,
)
from .config import (
    DataConfig,
    GraphConfig,
    ModelConfig,
    RunConfig,
    TrainConfig,
    WindowSpec,
)

__all__ = [
    "ActivationKind",
    "AuditScope",
    "LossMode",
    "Padding",
    "Preset",
    "Protocol",
    "SweepAxis",
    "ThetaMode",
    "DataConfig",
    "GraphConfig",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "WindowSpec",
]
