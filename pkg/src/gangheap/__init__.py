"""Generational GC heap simulator with locality-aware gang promotion.

The heap is a contiguous byte arena whose offsets act as addresses.  Objects
of configured storage classes (maps, sorted maps) are promoted together with
their children into per-class old-generation spaces made of linked segments,
instead of being scattered by parallel copying.
"""

from gangheap.config import (
    ALIGN,
    CARD_BYTES,
    FIELD_BYTES,
    HEADER_BYTES,
    PAGE_BYTES,
    REGION_BYTES,
    BdaConfig,
    ConfigError,
    HeapConfig,
)
from gangheap.heap import Heap, Handle, NULL
from gangheap.errors import (
    AllocationError,
    GuardViolation,
    HeapError,
    OutOfMemoryError,
    SegmentAllocationError,
)

__all__ = [
    "ALIGN",
    "CARD_BYTES",
    "FIELD_BYTES",
    "HEADER_BYTES",
    "PAGE_BYTES",
    "REGION_BYTES",
    "NULL",
    "AllocationError",
    "BdaConfig",
    "ConfigError",
    "GuardViolation",
    "Handle",
    "Heap",
    "HeapConfig",
    "HeapError",
    "OutOfMemoryError",
    "SegmentAllocationError",
]
