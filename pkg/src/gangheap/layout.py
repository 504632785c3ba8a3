"""Heap geometry: young spaces, the old non-bda space, bda-spaces and segments.

Addresses are byte offsets into one arena.  The first region is never mapped
so that offset 0 can serve as the null reference, and one unmapped region
separates every pair of neighbouring spaces (the dead space a card scanner
must not walk into).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Optional

from gangheap.config import (
    FIELD_BYTES,
    HEADER_BYTES,
    REGION_BYTES,
    BdaConfig,
    HeapConfig,
    align_down,
    align_up,
)
from gangheap.errors import SegmentAllocationError


def estimate_container_bytes(config: BdaConfig, h: int = HEADER_BYTES, f: int = FIELD_BYTES) -> int:
    """Expected footprint of one storage instance and its elements.

    ``(h + NF*f)*CS`` covers the node objects, ``DL*CS*(h + DNF*f)`` the
    delegated element objects.
    """
    cs = config.container_size
    return (h + config.node_fields * f) * cs + config.delegation_level * cs * (
        h + config.default_node_fields * f
    )


def segment_size(config: BdaConfig, region: int = REGION_BYTES) -> int:
    est = estimate_container_bytes(config)
    per_segment = -(-est // config.container_fraction)
    return max(region, align_up(per_segment, region))


class ContiguousSpace:
    """A bump-allocated address range."""

    def __init__(self, name: str, start: int, end: int):
        self.name = name
        self.start = start
        self.end = end
        self.top = start
        self.lock = threading.Lock()

    @property
    def capacity(self) -> int:
        return self.end - self.start

    @property
    def used(self) -> int:
        return self.top - self.start

    @property
    def free(self) -> int:
        return self.end - self.top

    def contains(self, addr: int) -> bool:
        return self.start <= addr < self.end

    def bump(self, size: int) -> int:
        """Return the old top and advance it by ``size``, or -1 when full."""
        with self.lock:
            a = self.top
            if a + size > self.end:
                return -1
            self.top = a + size
            return a

    def reset(self):
        self.top = self.start

    def __repr__(self):
        return f"{type(self).__name__}({self.name} [{self.start:#x},{self.end:#x}) top={self.top:#x})"


@dataclass(eq=False)
class Segment:
    start: int
    end: int
    space_id: int
    top: int = -1
    owner: Optional[int] = None
    next: Optional["Segment"] = None
    spilled: bool = False

    def __post_init__(self):
        if self.top < 0:
            self.top = self.start

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def free(self) -> int:
        return self.end - self.top

    def __repr__(self):
        tag = " spilled" if self.spilled else ""
        return (f"Segment([{self.start:#x},{self.end:#x}) top={self.top:#x} "
                f"owner={self.owner}{tag})")


@dataclass(eq=False)
class Container:
    container_id: int
    space_id: int
    parent: int
    head: Optional[Segment] = None
    tail: Optional[Segment] = None
    degraded: bool = False

    def segments(self) -> Iterator[Segment]:
        seg = self.head
        while seg is not None:
            yield seg
            seg = seg.next

    def __len__(self):
        return sum(1 for _ in self.segments())


class BdaSpace(ContiguousSpace):
    def __init__(self, space_id: int, class_name: str, start: int, end: int):
        super().__init__(f"bda{space_id}", start, end)
        self.space_id = space_id
        self.class_name = class_name
        self.class_id: Optional[int] = None
        # LIFO free list of unowned segments.
        self.pool: list[Segment] = []
        self.containers: dict[int, Container] = {}


class Location(NamedTuple):
    kind: str  # eden | from | to | old_nonbda | bda | unmapped
    space_id: Optional[int] = None
    container_id: Optional[int] = None
    segment: Optional[Segment] = None


UNMAPPED = Location("unmapped")


class HeapGeometry:
    def __init__(self, config: HeapConfig):
        self.config = config
        bda = config.bda
        r = REGION_BYTES
        young = max(3 * r, align_down(int(config.heap_bytes * config.young_fraction), r))
        surv = max(r, align_down(young // (config.survivor_ratio + 2), r))
        eden = young - 2 * surv
        old = align_down(config.heap_bytes - young, r)
        bda_total = align_down(int(old * bda.bda_ratio), r) if config.bda_enabled else 0
        nonbda = old - bda_total
        if eden < r or nonbda < r:
            raise ValueError("heap too small for its young/bda split")

        cur = r  # region 0 is the null page
        self.eden = ContiguousSpace("eden", cur, cur + eden)
        cur += eden + r
        self.from_space = ContiguousSpace("from", cur, cur + surv)
        cur += surv + r
        self.to_space = ContiguousSpace("to", cur, cur + surv)
        cur += surv + r
        self.young_start = self.eden.start
        self.young_end = self.to_space.end
        self.old_nonbda = ContiguousSpace("old_nonbda", cur, cur + nonbda)
        self.old_base = cur
        cur += nonbda + r

        self.bda_spaces: list[BdaSpace] = []
        if config.bda_enabled:
            n = len(bda.classes)
            each = align_down(bda_total // n, r)
            for i, name in enumerate(bda.classes):
                size = each if i < n - 1 else bda_total - each * (n - 1)
                self.bda_spaces.append(BdaSpace(i, name, cur, cur + size))
                cur += size + r
        self.old_end = cur - r
        self.total_bytes = cur
        self.old_bytes = old
        self.bda_bytes = bda_total
        self.seg_size = segment_size(bda)
        self.region_seg: list[Optional[Segment]] = [None] * ((self.old_end - self.old_base) // r)
        # Bytes of old_nonbda a spill must leave free (set by the young collector).
        self.nonbda_reserve = 0
        # Called with (start, end) for gaps that must be made walkable.
        self.on_fill: Callable[[int, int], None] = lambda start, end: None
        self._next_container = 1
        self.containers: dict[int, Container] = {}
        self.spill_bytes = 0

    # -- queries ----------------------------------------------------------

    @property
    def old_spaces(self) -> list[ContiguousSpace]:
        return [self.old_nonbda, *self.bda_spaces]

    @property
    def old_top(self) -> int:
        """Top of the old generation as seen by the rest of the runtime."""
        if self.bda_spaces:
            return self.bda_spaces[-1].top
        return self.old_nonbda.top

    def is_young(self, addr: int) -> bool:
        return self.young_start <= addr < self.young_end

    def is_old(self, addr: int) -> bool:
        return self.old_base <= addr < self.old_end

    def segment_at(self, addr: int) -> Optional[Segment]:
        if not self.old_base <= addr < self.old_end:
            return None
        return self.region_seg[(addr - self.old_base) // REGION_BYTES]

    def space_of(self, addr: int) -> Optional[ContiguousSpace]:
        for sp in (self.eden, self.from_space, self.to_space, *self.old_spaces):
            if sp.start <= addr < sp.end:
                return sp
        return None

    def locate(self, addr: int) -> Location:
        for sp, kind in ((self.eden, "eden"), (self.from_space, "from"), (self.to_space, "to")):
            if sp.start <= addr < sp.end:
                return Location(kind)
        if self.old_nonbda.start <= addr < self.old_nonbda.end:
            seg = self.segment_at(addr)
            if seg is not None:
                return Location("old_nonbda", seg.space_id, seg.owner, seg)
            return Location("old_nonbda")
        for sp in self.bda_spaces:
            if sp.start <= addr < sp.end:
                seg = self.segment_at(addr)
                if seg is None:
                    return Location("bda", sp.space_id)
                return Location("bda", sp.space_id, seg.owner, seg)
        return UNMAPPED

    # -- segments ---------------------------------------------------------

    def new_container(self, space_id: int, parent: int) -> Container:
        c = Container(self._next_container, space_id, parent)
        self._next_container += 1
        self.containers[c.container_id] = c
        self.bda_spaces[space_id].containers[c.container_id] = c
        return c

    def drop_container(self, c: Container):
        self.containers.pop(c.container_id, None)
        self.bda_spaces[c.space_id].containers.pop(c.container_id, None)

    def _map_segment(self, seg: Optional[Segment], start: int, end: int):
        base = self.old_base
        for i in range((start - base) // REGION_BYTES, (end - base) // REGION_BYTES):
            self.region_seg[i] = seg

    def allocate_segment(self, space_id: int, container: Container) -> Segment:
        """Pool first, then the space's top, then a spill into old_nonbda."""
        space = self.bda_spaces[space_id]
        size = self.seg_size
        with space.lock:
            if space.pool:
                seg = space.pool.pop()
                space.top = max(space.top, seg.end)
            elif space.top + size <= space.end:
                seg = Segment(space.top, space.top + size, space_id)
                space.top += size
                self._map_segment(seg, seg.start, seg.end)
            else:
                seg = self._spill(space_id, size)
        seg.owner = container.container_id
        seg.top = seg.start
        seg.next = None
        if container.tail is None:
            container.head = container.tail = seg
        else:
            container.tail.next = seg
            container.tail = seg
        return seg

    def _spill(self, space_id: int, size: int) -> Segment:
        nb = self.old_nonbda
        with nb.lock:
            start = align_up(nb.top, REGION_BYTES)
            if start + size > nb.end - self.nonbda_reserve:
                raise SegmentAllocationError(
                    f"bda space {space_id} full and old_nonbda cannot take a {size}-byte segment")
            if start > nb.top:
                self.on_fill(nb.top, start)
            nb.top = start + size
        seg = Segment(start, start + size, space_id, spilled=True)
        self._map_segment(seg, seg.start, seg.end)
        self.spill_bytes += size
        return seg

    def release_segment(self, seg: Segment):
        if seg.owner is None:
            raise ValueError(f"segment already released: {seg}")
        c = self.containers.get(seg.owner)
        if c is not None:
            prev = None
            for s in c.segments():
                if s is seg:
                    break
                prev = s
            else:
                raise ValueError(f"{seg} not on the chain of container {c.container_id}")
            if prev is None:
                c.head = seg.next
            else:
                prev.next = seg.next
            if c.tail is seg:
                c.tail = prev
        seg.owner = None
        seg.next = None
        seg.top = seg.start
        if seg.spilled:
            # A spilled slot dissolves back into old_nonbda free space.
            self._map_segment(None, seg.start, seg.end)
            self.spill_bytes -= seg.size
            self.on_fill(seg.start, seg.end)
        else:
            space = self.bda_spaces[seg.space_id]
            with space.lock:
                space.pool.append(seg)

    def chain_bytes(self, space_id: int) -> int:
        sp = self.bda_spaces[space_id]
        return sum(s.size for c in sp.containers.values() for s in c.segments())

    # -- debugging --------------------------------------------------------

    def dump(self) -> str:
        lines = []
        for sp in (self.eden, self.from_space, self.to_space, self.old_nonbda):
            lines.append(f"space {sp.name} [{sp.start:#x},{sp.end:#x}) top={sp.top:#x}")
        for sp in self.bda_spaces:
            lines.append(f"space {sp.name} class={sp.class_name} [{sp.start:#x},{sp.end:#x}) "
                         f"top={sp.top:#x} pool={len(sp.pool)}")
            for c in sp.containers.values():
                for seg in c.segments():
                    lines.append(f"  segment [{seg.start:#x},{seg.end:#x}) owner={c.container_id} "
                                 f"top={seg.top:#x}{' spilled' if seg.spilled else ''}")
            for seg in sp.pool:
                lines.append(f"  segment [{seg.start:#x},{seg.end:#x}) owner=- top={seg.top:#x}")
        lines.append(f"old_top {self.old_top:#x}")
        return "\n".join(lines) + "\n"
