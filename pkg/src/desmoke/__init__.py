"""Smoke-type-aware surgical video desmoking.

Synthetic paired-data generation with per-type smoke masks, a three-stage
restoration network (feature perception, query-based mask segmentation
with overlap disentanglement, dual-branch reconstruction), losses, and
train/infer/eval tooling.
"""

from .config import (
    AmbientParams,
    AugParams,
    LossConfig,
    ModelConfig,
    RunConfig,
    SceneConfig,
    SmokeSource,
    TrainConfig,
)

__version__ = "0.1.0"

__all__ = [
    "AmbientParams",
    "AugParams",
    "LossConfig",
    "ModelConfig",
    "RunConfig",
    "SceneConfig",
    "SmokeSource",
    "TrainConfig",
    "__version__",
]
