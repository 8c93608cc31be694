"""Adaptive trajectory policy optimization for a toy masked-diffusion LM."""

from .core import AtpoError, DifficultyCurves, RolloutTrace, SegmentPlan, StepRecord, TrainConfig, Vocab

__all__ = ["AtpoError", "DifficultyCurves", "RolloutTrace", "SegmentPlan", "StepRecord", "TrainConfig", "Vocab"]
__version__ = "0.1.0"
