class HeapError(Exception):
    pass


class AllocationError(HeapError):
    """Object cannot be placed even after a collection."""


class OutOfMemoryError(HeapError):
    pass


class SegmentAllocationError(HeapError):
    """No bda-space slot, pool segment or old_nonbda room left for a segment."""


class GuardViolation(HeapError):
    """Compaction tried to drain a source region into another container."""


class SnapshotParseError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno
