"""The managed heap: arena, allocation, field access, write barrier, roots.

Mutator code keeps references across allocations only through
:class:`Handle` objects; every collection may move objects and updates the
handles.  All collections are stop-the-world: callers must make sure no other
mutator thread is touching the heap when one is triggered.
"""

from __future__ import annotations

import threading
from typing import Iterator, Optional, Sequence, Union

from gangheap.barrier import CardTable
from gangheap.config import FIELD_BYTES, HEADER_BYTES, REGION_BYTES, HeapConfig
from gangheap.errors import AllocationError, HeapError, OutOfMemoryError
from gangheap.layout import ContiguousSpace, HeapGeometry
from gangheap.objects import (
    AGE_MASK,
    AGE_SHIFT,
    CID_MASK,
    MARK_BIT,
    NREF_SHIFT,
    ClassDescriptor,
    ClassRegistry,
    ReferenceQueue,
)
from gangheap.stats import GcStats
from gangheap.workers import WorkerGang

NULL = 0


class Handle:
    """A root slot; ``ref`` is kept current across collections."""

    __slots__ = ("ref", "_heap", "_key")

    def __init__(self, heap: "Heap", ref: int, key: int):
        self.ref = ref
        self._heap = heap
        self._key = key

    def release(self):
        self._heap._handles.pop(self._key, None)

    def __repr__(self):
        return f"Handle({self.ref:#x})"


class Heap:
    def __init__(self, config: Optional[HeapConfig] = None, debug: bool = False):
        self.config = config = config or HeapConfig()
        self.debug = debug
        self.geometry = geo = HeapGeometry(config)
        self.arena = bytearray(geo.total_bytes)
        self.words = memoryview(self.arena).cast("Q")
        bda_classes = config.bda.classes if config.bda_enabled else ()
        self.registry = ClassRegistry(bda_classes)
        self.queue = ReferenceQueue(self.registry)
        self._enqueue = self.queue.roots.append
        self.cards = CardTable(geo.old_base, geo.old_end)
        geo.on_fill = self.fill
        self.gang = WorkerGang(config.gc_threads, config.seed)
        self._handles: dict[int, Handle] = {}
        self._next_handle = 0
        self._tls = threading.local()
        self._epoch = 0
        self._alloc_lock = threading.RLock()
        self.gc_log: list[GcStats] = []
        self.minor_count = 0
        self.full_count = 0
        # Collections call these on entry and after finishing, e.g. invariant checkers.
        self.before_gc: list = []
        self.after_gc: list = []
        # Append-only list of touched addresses when tracing is on.
        self.trace: Optional[list] = None
        # Young objects whose queued root shares them with another container.
        self.shared_events = 0

    # -- classes ------------------------------------------------------------

    def register_class(self, name: str, ref_field_count: int = 0, scalar_bytes: int = 0,
                       is_array: bool = False) -> ClassDescriptor:
        desc = self.registry.register(name, ref_field_count, scalar_bytes, is_array)
        if desc.is_bda_class:
            self.geometry.bda_spaces[desc.target_bda_space].class_id = desc.class_id
        return desc

    # -- roots ---------------------------------------------------------------

    def handle(self, ref: int) -> Handle:
        h = Handle(self, ref, self._next_handle)
        self._handles[self._next_handle] = h
        self._next_handle += 1
        return h

    def handles(self) -> list[Handle]:
        return list(self._handles.values())

    def root_refs(self) -> list[int]:
        return [h.ref for h in self._handles.values() if h.ref]

    # -- allocation ------------------------------------------------------------

    def size_of_class(self, cls: Union[int, ClassDescriptor], length: Optional[int] = None) -> int:
        desc = cls if isinstance(cls, ClassDescriptor) else self.registry[cls]
        return desc.size(length if desc.is_array else None)

    def allocate(self, cls: Union[int, ClassDescriptor], fields: Sequence[int] = (),
                 scalar: bytes = b"", length: Optional[int] = None) -> int:
        desc = cls if isinstance(cls, ClassDescriptor) else self.registry[cls]
        if desc.is_array:
            if length is None:
                raise ValueError(f"array class {desc.name} needs a length")
            n = length
        else:
            if length is not None and length != desc.ref_field_count:
                raise ValueError(f"{desc.name} has a fixed field count")
            n = desc.ref_field_count
        if len(fields) > n:
            raise IndexError(f"{desc.name} has {n} reference fields, got {len(fields)}")
        if len(scalar) > desc.scalar_bytes:
            raise ValueError(f"{desc.name} payload is {desc.scalar_bytes} bytes")
        size = desc.base_size + n * FIELD_BYTES
        tl = self._tls
        if getattr(tl, "epoch", -1) != self._epoch or tl.top + size > tl.end:
            self._refill_tlab(size)
        addr = tl.top
        tl.top = addr + size
        w = self.words
        i = addr >> 3
        cid = desc.class_id
        w[i] = cid | (n << NREF_SHIFT)
        w[i + 1] = 0
        if fields:
            i += 2
            for k, v in enumerate(fields):
                w[i + k] = v
        if scalar:
            p = addr + HEADER_BYTES + n * FIELD_BYTES
            self.arena[p:p + len(scalar)] = scalar
        if desc.is_bda_class:
            self._enqueue(addr)
        return addr

    def reserve(self, nbytes: int):
        """Guarantee the next ``nbytes`` of allocation on this thread won't collect."""
        tl = self._tls
        if getattr(tl, "epoch", -1) != self._epoch or tl.end - tl.top < nbytes:
            self._refill_tlab(nbytes)

    def _retire_tlab(self, tl):
        if getattr(tl, "epoch", -1) == self._epoch and tl.end > tl.top:
            self.fill(tl.top, tl.end)

    def _refill_tlab(self, need: int):
        tl = self._tls
        eden = self.geometry.eden
        with self._alloc_lock:
            self._retire_tlab(tl)
            for attempt in range(3):
                want = max(self.config.tlab_bytes, need)
                with eden.lock:
                    take = min(want, eden.free)
                    if take >= need:
                        start = eden.top
                        eden.top += take
                        tl.top, tl.end, tl.epoch = start, start + take, self._epoch
                        return
                if need > eden.capacity:
                    break
                if attempt == 0:
                    self.collect_for_allocation()
                else:
                    self.full_collect()
            if need > eden.capacity:
                raise AllocationError(f"cannot allocate {need} bytes: larger than eden")
            raise OutOfMemoryError(f"cannot allocate {need} bytes: eden still full after a full collection")

    def promotion_guaranteed(self) -> bool:
        geo = self.geometry
        margin = 2 * self.config.gc_threads * self.config.old_plab_bytes
        return geo.old_nonbda.free >= geo.eden.used + geo.from_space.used + margin

    def collect_for_allocation(self):
        if self.promotion_guaranteed():
            self.minor_collect()
        else:
            self.full_collect()

    def invalidate_tlabs(self):
        self._epoch += 1

    # -- field access ------------------------------------------------------------

    def _check(self, ref: int, index: int) -> int:
        if ref == NULL:
            raise HeapError("null dereference")
        w0 = self.words[ref >> 3]
        n = w0 >> NREF_SHIFT
        if self.debug and not (w0 & CID_MASK):
            raise HeapError(f"dangling reference {ref:#x}")
        if not 0 <= index < n:
            raise IndexError(f"field {index} out of range for object with {n} reference fields")
        return (ref >> 3) + 2 + index

    def read_field(self, ref: int, index: int) -> int:
        i = self._check(ref, index)
        if self.trace is not None:
            self.trace.append(i << 3)
        return self.words[i]

    def write_field(self, ref: int, index: int, value: int):
        i = self._check(ref, index)
        if self.trace is not None:
            self.trace.append(i << 3)
        self.words[i] = value
        geo = self.geometry
        if geo.old_base <= ref < geo.old_end:
            self.cards.cards[((i << 3) - geo.old_base) >> 9] = 1

    def read_scalar(self, ref: int) -> bytes:
        w0 = self.words[ref >> 3]
        desc = self.registry[w0 & CID_MASK]
        p = ref + HEADER_BYTES + (w0 >> NREF_SHIFT) * FIELD_BYTES
        if self.trace is not None:
            self.trace.append(p)
        return bytes(self.arena[p:p + desc.scalar_bytes])

    def write_scalar(self, ref: int, data: bytes):
        w0 = self.words[ref >> 3]
        desc = self.registry[w0 & CID_MASK]
        if len(data) > desc.scalar_bytes:
            raise ValueError("payload too large")
        p = ref + HEADER_BYTES + (w0 >> NREF_SHIFT) * FIELD_BYTES
        if self.trace is not None:
            self.trace.append(p)
        self.arena[p:p + len(data)] = data

    def read_word(self, ref: int, k: int = 0) -> int:
        """k-th 64-bit word of the scalar payload."""
        w = self.words
        i = (ref >> 3) + 2 + (w[ref >> 3] >> NREF_SHIFT) + k
        if self.trace is not None:
            self.trace.append(i << 3)
        return w[i]

    def write_word(self, ref: int, value: int, k: int = 0):
        w = self.words
        i = (ref >> 3) + 2 + (w[ref >> 3] >> NREF_SHIFT) + k
        if self.trace is not None:
            self.trace.append(i << 3)
        w[i] = value

    def class_of(self, ref: int) -> ClassDescriptor:
        return self.registry[self.words[ref >> 3] & CID_MASK]

    def field_count(self, ref: int) -> int:
        return self.words[ref >> 3] >> NREF_SHIFT

    def age_of(self, ref: int) -> int:
        return (self.words[ref >> 3] >> AGE_SHIFT) & AGE_MASK

    def is_marked(self, ref: int) -> bool:
        return bool(self.words[ref >> 3] & MARK_BIT)

    def forwarding_of(self, ref: int) -> int:
        return self.words[(ref >> 3) + 1]

    def size_of(self, ref: int) -> int:
        w0 = self.words[ref >> 3]
        cid = w0 & CID_MASK
        if cid == 0:
            return w0 >> NREF_SHIFT
        return self.registry.base_size[cid] + (w0 >> NREF_SHIFT) * FIELD_BYTES

    def refs_of(self, ref: int) -> list[int]:
        i = ref >> 3
        n = self.words[i] >> NREF_SHIFT
        return list(self.words[i + 2:i + 2 + n])

    def payload_of(self, ref: int) -> bytes:
        w0 = self.words[ref >> 3]
        desc = self.registry[w0 & CID_MASK]
        p = ref + HEADER_BYTES + (w0 >> NREF_SHIFT) * FIELD_BYTES
        return bytes(self.arena[p:p + desc.scalar_bytes])

    # -- layout helpers ----------------------------------------------------------------

    def fill(self, start: int, end: int):
        """Write a filler object over [start, end) so the range stays walkable."""
        if end <= start:
            return
        self.words[start >> 3] = (end - start) << NREF_SHIFT
        geo = self.geometry
        if geo.old_base <= start < geo.old_end:
            self.cards.record_object(start, end - start)

    def place_old(self, addr: int, size: int):
        self.cards.record_object(addr, size)

    def walk(self, start: int, end: int) -> Iterator[int]:
        """Object starts (fillers included) in a contiguous parsable range."""
        w = self.words
        bs = self.registry.base_size
        a = start
        while a < end:
            yield a
            w0 = w[a >> 3]
            cid = w0 & CID_MASK
            a += (w0 >> NREF_SHIFT) if cid == 0 else bs[cid] + (w0 >> NREF_SHIFT) * FIELD_BYTES

    def objects_in(self, space: ContiguousSpace) -> Iterator[int]:
        """Non-filler objects of a space in address order (segment-aware)."""
        w = self.words
        for a in self._walk_space(space):
            if w[a >> 3] & CID_MASK:
                yield a

    def _walk_space(self, space: ContiguousSpace) -> Iterator[int]:
        geo = self.geometry
        if not geo.is_old(space.start):
            yield from self.walk(space.start, space.top)
            return
        a = space.start
        top = space.top
        seg_at = geo.segment_at
        while a < top:
            seg = seg_at(a)
            if seg is not None:
                if seg.owner is not None:
                    yield from self.walk(seg.start, seg.top)
                a = seg.end
                continue
            yield a
            a += self.size_of(a)

    def all_objects(self) -> Iterator[int]:
        geo = self.geometry
        for sp in (geo.eden, geo.from_space, *geo.old_spaces):
            yield from self.objects_in(sp)

    def _dirty_pieces(self, space: ContiguousSpace) -> list[tuple[int, int, int, int]]:
        """(run_lo, run_hi, first_object_start, last_object_end) per dirty piece.

        Runs are split where a segment begins or ends, and clipped to the
        owning area's top, so the walk never leaves allocated memory.
        """
        geo = self.geometry
        cards = self.cards
        fo = cards.first_obj
        out = []
        nregions = len(geo.region_seg)
        is_nonbda = space is geo.old_nonbda
        for lo, hi in cards.dirty_runs(space.start, space.top):
            pos = lo
            while pos < hi:
                r = (pos - geo.old_base) // REGION_BYTES
                seg = geo.region_seg[r]
                if seg is not None:
                    piece_hi = min(hi, seg.end)
                    lim = seg.top if seg.owner is not None else seg.start
                elif is_nonbda:
                    r += 1
                    while r < nregions and geo.region_seg[r] is None and geo.old_base + r * REGION_BYTES < hi:
                        r += 1
                    piece_hi = min(hi, geo.old_base + r * REGION_BYTES)
                    lim = space.top
                else:
                    piece_hi = min(hi, geo.old_base + (r + 1) * REGION_BYTES)
                    lim = pos
                a, b = pos, min(piece_hi, lim)
                pos = piece_hi
                if a >= b:
                    continue
                first = fo[(a - cards.base) >> 9]
                if first < 0 or first > a:
                    raise HeapError(f"block offset table has no object covering {a:#x}")
                end = first
                for o in self.walk(first, b):
                    end = o + self.size_of(o)
                out.append((a, b, first, end))
        return out

    def scan_dirty_ranges(self, space: ContiguousSpace) -> list[tuple[int, int]]:
        return [(first, end) for _, _, first, end in self._dirty_pieces(space)]

    # -- collections ------------------------------------------------------------------

    def minor_collect(self) -> GcStats:
        """Minor collection, or a full one when promotion could fail."""
        from gangheap.young import minor_collect

        with self._alloc_lock:
            for cb in self.before_gc:
                cb(self)
            if not self.promotion_guaranteed():
                return self._full()
            return minor_collect(self)

    def full_collect(self) -> GcStats:
        with self._alloc_lock:
            for cb in self.before_gc:
                cb(self)
            return self._full()

    def _full(self) -> GcStats:
        from gangheap.full import full_collect

        return full_collect(self)

    def _record(self, stats: GcStats):
        self.gc_log.append(stats)
        for cb in self.after_gc:
            cb(self, stats)

    def young_empty(self) -> bool:
        geo = self.geometry
        return geo.eden.used == 0 and geo.from_space.used == 0

    def young_used(self) -> int:
        geo = self.geometry
        return geo.eden.used + geo.from_space.used
