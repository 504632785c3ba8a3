from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class GcStats:
    kind: str
    seq: int
    pause_s: float = 0.0
    bytes_copied: int = 0
    objects_copied: int = 0
    objects_promoted: int = 0
    containers_created: int = 0
    gang_objects: int = 0
    queue_drained: int = 0
    queue_dropped: int = 0
    shared_children: int = 0
    degraded_containers: int = 0
    live_bytes: int = 0
    regions_moved: int = 0
    segments_released: int = 0
    evicted_objects: int = 0
    phase_s: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)
