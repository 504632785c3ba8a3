"""Global constants and the two configuration records of the runtime."""

from __future__ import annotations

from dataclasses import dataclass, field

HEADER_BYTES = 16
FIELD_BYTES = 8
ALIGN = 8
REGION_BYTES = 4096
PAGE_BYTES = 4096
CARD_BYTES = 512
TLAB_BYTES = 64 * 1024

MODES = ("base", "bda")


class ConfigError(ValueError):
    pass


def align_up(n: int, a: int = ALIGN) -> int:
    return (n + a - 1) // a * a


def align_down(n: int, a: int) -> int:
    return n // a * a


@dataclass(frozen=True)
class BdaConfig:
    """Launch-time parameters of the BDA-heap.

    ``classes`` are the fully-qualified names handled as storage types; every
    other field only guides segment sizing and the depth of gang promotion.
    """

    classes: tuple[str, ...] = ()
    bda_ratio: float = 0.5
    container_fraction: int = 1
    delegation_level: int = 2
    default_node_fields: int = 1
    node_fields: int = 2
    container_size: int = 25_000

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError(f"duplicate bda class in {self.classes}")
        if not 0.0 <= self.bda_ratio < 1.0:
            raise ConfigError(f"bda_ratio must be in [0, 1), got {self.bda_ratio}")
        if self.container_fraction < 1:
            raise ConfigError("container_fraction must be >= 1")
        for name in ("delegation_level", "default_node_fields", "node_fields", "container_size"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class HeapConfig:
    heap_bytes: int = 64 * 1024 * 1024
    young_fraction: float = 0.25
    survivor_ratio: int = 8
    tenuring_threshold: int = 2
    gc_threads: int = 8
    mode: str = "bda"
    tlab_bytes: int = TLAB_BYTES
    young_plab_bytes: int = 32 * 1024
    old_plab_bytes: int = 8 * 1024
    # Ignore the delegation-level bound and gang-copy the full young closure.
    gang_full_closure: bool = False
    seed: int = 0
    bda: BdaConfig = field(default_factory=BdaConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.young_fraction < 1.0:
            raise ConfigError("young_fraction must be in (0, 1)")
        if self.survivor_ratio < 1:
            raise ConfigError("survivor_ratio must be >= 1")
        if not 0 <= self.tenuring_threshold <= 15:
            raise ConfigError("tenuring_threshold must be in 0..15")
        if self.gc_threads < 1:
            raise ConfigError("gc_threads must be >= 1")
        if self.heap_bytes < 16 * REGION_BYTES:
            raise ConfigError(f"heap_bytes too small: {self.heap_bytes}")

    @property
    def bda_enabled(self) -> bool:
        return self.mode == "bda" and bool(self.bda.classes)
