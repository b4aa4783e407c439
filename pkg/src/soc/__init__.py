"""Bounded-memory streaming clustering with skeleton sets."""
from .core import EngineParams, Partition, SkeletonEntry, SkeletonSet, StreamError
from .engine import AssignmentEvent, SOCEngine, SplitRecord
from .keys import KeySource

__all__ = [
    "AssignmentEvent",
    "EngineParams",
    "KeySource",
    "Partition",
    "SOCEngine",
    "SkeletonEntry",
    "SkeletonSet",
    "SplitRecord",
    "StreamError",
]
__version__ = "0.1.0"
