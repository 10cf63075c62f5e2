"""Censored-data calibration and comparison of stress-life fatigue models."""
__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .dataset import FatigueDataset, FatigueRecord, load_csv, stratify
from .models import ModelKind, ParamVector

__all__ = ["__version__", "BACKEND", "FatigueDataset", "FatigueRecord", "load_csv",
           "stratify", "ModelKind", "ParamVector"]
