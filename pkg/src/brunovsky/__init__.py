"""Numerically reliable Brunovsky transformations of controllable linear systems."""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

from .core import (
    BrunovskyPair,
    IndexSummary,
    LinearSystem,
    ParameterSet,
    StaircasePair,
    TransformTriple,
    brunovsky_target,
    validate_system,
)
from .pipeline import proposed_pipeline
from .staircase import conjugate_partition, index_summary, reduce_to_staircase

__all__ = [
    "BrunovskyPair",
    "IndexSummary",
    "LinearSystem",
    "ParameterSet",
    "StaircasePair",
    "TransformTriple",
    "brunovsky_target",
    "conjugate_partition",
    "index_summary",
    "proposed_pipeline",
    "reduce_to_staircase",
    "validate_system",
]
