"""Discrete modulus of continuity: exact and fast evaluation, covering,
piecewise-constant interpolation and multilevel Monte Carlo estimators."""

from .metric import LabeledDataset, Metric, PointSet
from .modulus import RhoClass, StepFunction, modulus_at, modulus_full, seminorm

__all__ = ["LabeledDataset", "Metric", "PointSet", "RhoClass", "StepFunction",
           "modulus_at", "modulus_full", "seminorm"]
__version__ = "0.1.0"
