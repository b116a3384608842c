"""Anomalous sound detection with a learnable spectral filter front end
and dual adversarial reconstruction generators."""

from .metrics import average_precision, confusion, prf1, roc_auc, youden_threshold
from .model import (
    DetectConfig,
    DetectorModel,
    TrainConfig,
    anomaly_score,
    classify,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .signals import Signal, SynthConfig, WindowSpec, sliding_window, synth_dataset

__all__ = [
    "DetectConfig",
    "DetectorModel",
    "Signal",
    "SynthConfig",
    "TrainConfig",
    "WindowSpec",
    "anomaly_score",
    "average_precision",
    "classify",
    "confusion",
    "load_checkpoint",
    "prf1",
    "roc_auc",
    "save_checkpoint",
    "sliding_window",
    "synth_dataset",
    "train",
    "youden_threshold",
]

__version__ = "0.1.0"
