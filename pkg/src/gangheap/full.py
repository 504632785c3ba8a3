"""Stop-the-world mark-compact of the whole heap in four phases.

mark     parallel marking from the handle roots; live bytes per old region.
summary  one thread computes every live object's destination: old_nonbda
         slides toward its bottom, then takes evicted container objects and
         young survivors; each bda-space packs the surviving segments of its
         containers into the lowest segment slots, container by container in
         chain order.  Empty segments are scheduled for release.
compact  pointers are adjusted, then workers claim destination regions and
         fill them from source regions, refusing a source summarized for a
         different container.
cleanup  tops, segment chains and pools are rebuilt; the card table is
         cleaned or invalidated depending on whether young objects remain.

Queued bda roots that are still young stay in the young generation (slid to
the bottom of eden) together with their children, so the next minor
collection can gang-promote them; nothing young is ever moved into a
bda-space here.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional

from gangheap.config import FIELD_BYTES, REGION_BYTES, align_up
from gangheap.errors import GuardViolation, OutOfMemoryError
from gangheap.layout import Segment
from gangheap.objects import CID_MASK, MARK_BIT, NREF_SHIFT
from gangheap.stats import GcStats


@dataclass(eq=False)
class Region:
    index: int
    start: int
    live_bytes: int = 0
    destination: Optional[int] = None
    source_exhausted: bool = False
    target_container: Optional[int] = None
    claimed: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def claim(self) -> bool:
        """Atomic test-and-set; exactly one caller gets True."""
        with self._lock:
            if self.claimed:
                return False
            self.claimed = True
            return True


@dataclass
class MarkState:
    marked: list = field(default_factory=list)
    region_live: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.marked)


@dataclass
class SummaryData:
    regions: dict = field(default_factory=dict)
    # Destination region (or "young") -> ordered [(src, dest, size)].
    fills: dict = field(default_factory=dict)
    fill_targets: dict = field(default_factory=dict)
    # container id -> [(slot_start, used_bytes, spilled)]
    chains: dict = field(default_factory=dict)
    release: list = field(default_factory=list)
    dissolved: list = field(default_factory=list)
    nonbda_top: int = 0
    spill_slots: list = field(default_factory=list)
    eden_top: int = 0
    from_top: int = 0
    retained_young: int = 0
    evicted: int = 0
    live_bytes: int = 0
    space_live: dict = field(default_factory=dict)


class FullCollector:
    def __init__(self, heap):
        self.heap = heap
        self.geo = heap.geometry
        self.w = heap.words
        self.bs = heap.registry.base_size
        self.stats = GcStats("full", seq=len(heap.gc_log))
        cfg = heap.config
        self.gang_depth = None if cfg.gang_full_closure else cfg.bda.delegation_level
        self.summary: Optional[SummaryData] = None

    def _size(self, a: int) -> int:
        w0 = self.w[a >> 3]
        return self.bs[w0 & CID_MASK] + (w0 >> NREF_SHIFT) * FIELD_BYTES

    # -- phase 1 ---------------------------------------------------------------

    def mark_phase(self, roots) -> MarkState:
        w = self.w
        bs = self.bs
        geo = self.geo
        old_base, old_end = geo.old_base, geo.old_end
        ms = MarkState()
        marked = ms.marked
        live = ms.region_live

        def mark(a):
            i = a >> 3
            w0 = w[i]
            if w0 & MARK_BIT:
                return False
            w[i] = w0 | MARK_BIT
            marked.append(a)
            if old_base <= a < old_end:
                r = (a - old_base) // REGION_BYTES
                live[r] = live.get(r, 0) + bs[w0 & CID_MASK] + (w0 >> NREF_SHIFT) * FIELD_BYTES
            return True

        def process(worker, a):
            i = a >> 3
            n = w[i] >> NREF_SHIFT
            for v in w[i + 2:i + 2 + n]:
                if v and mark(v):
                    worker.queue.push(v)

        gang = self.heap.gang
        gang.distribute([r for r in roots if r and mark(r)])
        gang.run(process)
        return ms

    # -- phase 2 ---------------------------------------------------------------

    def _container_members(self, c, objs_by_seg, w):
        """Objects of ``c`` reachable from its parent through the container."""
        geo = self.geo
        cid = c.container_id
        keep = {c.parent}
        stack = [c.parent]
        while stack:
            a = stack.pop()
            i = a >> 3
            n = w[i] >> NREF_SHIFT
            for v in w[i + 2:i + 2 + n]:
                if v and v not in keep:
                    seg = geo.segment_at(v)
                    if seg is not None and seg.owner == cid:
                        keep.add(v)
                        stack.append(v)
        return keep

    def _retained_young(self, marked_young) -> set:
        """Live queued roots and their bounded young closure stay young.

        Young objects never drain into bda-spaces during a full collection;
        keeping queued roots young lets the next minor collection gang-promote
        them.  Roots are taken in queue order while the retained bytes fit in
        a quarter of eden; the rest are promoted like any other survivor.
        """
        w = self.w
        geo = self.geo
        ylo, yhi = geo.young_start, geo.young_end
        budget = geo.eden.capacity // 4
        keep = set()
        depth = self.gang_depth
        for root in self.heap.queue.roots:
            if not w[root >> 3] & MARK_BIT or root in keep:
                continue
            gang = set()
            stack = [(root, 0)]
            while stack:
                a, d = stack.pop()
                if a in keep or a in gang:
                    continue
                gang.add(a)
                if depth is None or d < depth:
                    i = a >> 3
                    n = w[i] >> NREF_SHIFT
                    for v in w[i + 2:i + 2 + n]:
                        if ylo <= v < yhi:
                            stack.append((v, d + 1))
            cost = sum(self._size(a) for a in gang)
            if cost > budget:
                break
            budget -= cost
            keep |= gang
        return keep

    def summary_phase(self, ms: MarkState) -> SummaryData:
        w = self.w
        geo = self.geo
        sd = SummaryData()
        old_base = geo.old_base
        ylo, yhi = geo.young_start, geo.young_end
        seg_size = geo.seg_size
        nb = geo.old_nonbda
        size = self._size

        marked = sorted(ms.marked)
        young, plain = [], []
        by_seg: dict[int, list] = {}
        seg_objs: dict[int, Segment] = {}
        for a in marked:
            if ylo <= a < yhi:
                young.append(a)
                continue
            seg = geo.segment_at(a)
            if seg is not None and seg.owner is not None:
                k = id(seg)
                if k not in by_seg:
                    by_seg[k] = []
                    seg_objs[k] = seg
                by_seg[k].append(a)
            else:
                plain.append(a)

        # Containers: dissolve dead ones, evict objects that no longer trace
        # from the parent, keep the rest segment by segment in chain order.
        evicted = []
        kept_chains = []
        for cid in sorted(geo.containers):
            c = geo.containers[cid]
            if not w[c.parent >> 3] & MARK_BIT:
                sd.dissolved.append(c)
                for seg in c.segments():
                    evicted.extend(by_seg.get(id(seg), ()))
                    sd.release.append(seg)
                continue
            keep = self._container_members(c, by_seg, w)
            segs = []
            for seg in c.segments():
                objs = by_seg.get(id(seg), ())
                mine = [a for a in objs if a in keep]
                if len(mine) != len(objs):
                    evicted.extend(a for a in objs if a not in keep)
                if mine:
                    segs.append(mine)
                else:
                    sd.release.append(seg)
            kept_chains.append((c, segs))

        evicted.sort()
        sd.evicted = len(evicted)

        fwd = {}
        # old_nonbda: plain objects slide down, evicted objects follow.
        cur = nb.start
        for a in plain:
            fwd[a] = cur
            cur += size(a)
        for a in evicted:
            fwd[a] = cur
            cur += size(a)

        # bda-spaces: surviving segments of each container into the lowest slots.
        spills = []
        slot_next = {sp.space_id: sp.start for sp in geo.bda_spaces}
        for c, segs in kept_chains:
            sp = geo.bda_spaces[c.space_id]
            chain = []
            for objs in segs:
                used = sum(size(a) for a in objs)
                if slot_next[c.space_id] + seg_size <= sp.end:
                    slot = slot_next[c.space_id]
                    slot_next[c.space_id] += seg_size
                    chain.append([slot, used, False])
                else:
                    chain.append([None, used, True])
                    spills.append(chain[-1])
                d = chain[-1]
                d.append(objs)
            sd.chains[c.container_id] = chain

        spill_bytes = len(spills) * seg_size
        if align_up(cur, REGION_BYTES) + spill_bytes > nb.end:
            raise OutOfMemoryError("old generation cannot hold the live data")

        # Young survivors go to old_nonbda while they fit; the rest stay young.
        retained = self._retained_young(young)
        stay = []
        for a in young:
            s = size(a)
            if a not in retained and align_up(cur + s, REGION_BYTES) + spill_bytes <= nb.end:
                fwd[a] = cur
                cur += s
            else:
                stay.append(a)
        sd.retained_young = len(stay)

        promoted_end = cur
        cur = align_up(cur, REGION_BYTES)
        sd.spill_slots = []
        for entry in spills:
            entry[0] = cur
            sd.spill_slots.append((promoted_end, cur))
            promoted_end = cur + seg_size
            cur += seg_size
        sd.nonbda_top = max(promoted_end, cur) if spills else promoted_end

        for c, _ in kept_chains:
            for slot, used, spilled, objs in sd.chains[c.container_id]:
                p = slot
                for a in objs:
                    fwd[a] = p
                    p += size(a)

        eden, frm = geo.eden, geo.from_space
        p = eden.start
        q = frm.start
        for a in stay:
            s = size(a)
            if p + s <= eden.end:
                fwd[a] = p
                p += s
            else:
                fwd[a] = q
                q += s
        if q > frm.end:
            raise OutOfMemoryError("young survivors retained for gang promotion overflow the young generation")
        sd.eden_top, sd.from_top = p, q

        # Forwarding addresses into headers; regions and fill lists.
        regions = sd.regions
        live = ms.region_live
        fills = sd.fills
        targets = sd.fill_targets
        seg_owner = {}
        for c, _ in kept_chains:
            for slot, used, spilled, objs in sd.chains[c.container_id]:
                for a in objs:
                    seg_owner[a] = c.container_id
        old_end = geo.old_end
        total = 0
        for a in marked:
            d = fwd[a]
            w[(a >> 3) + 1] = d
            s = size(a)
            total += s
            owner = seg_owner.get(a)
            if old_base <= a < old_end:
                ri = (a - old_base) // REGION_BYTES
                reg = regions.get(ri)
                if reg is None:
                    reg = regions[ri] = Region(ri, old_base + ri * REGION_BYTES, live.get(ri, 0),
                                               destination=d)
                if owner is not None:
                    reg.target_container = owner
            if old_base <= d < old_end:
                key = (d - old_base) // REGION_BYTES
                if key not in targets:
                    targets[key] = owner
            else:
                key = "young"
                targets[key] = None
            fills.setdefault(key, []).append((a, d, s))
        sd.live_bytes = total
        for key in fills:
            fills[key].sort(key=lambda m: m[1])
        self.summary = sd
        return sd

    # -- phase 3 ---------------------------------------------------------------

    def _adjust_pointers(self, ms: MarkState):
        w = self.w
        for a in ms.marked:
            i = a >> 3
            n = w[i] >> NREF_SHIFT
            for k in range(i + 2, i + 2 + n):
                v = w[k]
                if v:
                    w[k] = w[(v >> 3) + 1]
        heap = self.heap
        for h in heap.handles():
            if h.ref:
                h.ref = w[(h.ref >> 3) + 1]
        geo = self.geo
        roots = []
        for r in heap.queue.roots:
            if w[r >> 3] & MARK_BIT:
                d = w[(r >> 3) + 1]
                if geo.is_young(d):
                    roots.append(d)
        heap.queue.roots[:] = roots
        for cid, chain in self.summary.chains.items():
            c = self.geo.containers[cid]
            c.parent = w[(c.parent >> 3) + 1]

    def fill_region(self, key, moves, snap, regions):
        """Copy the objects destined for one region, source by source."""
        w = self.w
        arena = self.heap.arena
        geo = self.geo
        old_base, old_end = geo.old_base, geo.old_end
        expected = self.summary.fill_targets.get(key)
        cur_src = None
        record = self.heap.cards.record_object
        for a, d, s in moves:
            if old_base <= a < old_end:
                src = (a - old_base) // REGION_BYTES
                if src != cur_src:
                    cur_src = src
                    reg = regions.get(src)
                    got = reg.target_container if reg is not None else None
                    # Evicted objects may leave a container region for
                    # old_nonbda; nothing may enter a container it isn't in.
                    if expected is not None and got != expected:
                        raise GuardViolation(
                            f"source region {src} targets container {got}, "
                            f"destination expects {expected}")
            arena[d:d + s] = snap[a:a + s]
            w[d >> 3] &= ~MARK_BIT
            w[(d >> 3) + 1] = 0
            if old_base <= d < old_end:
                record(d, s)
        self.stats.regions_moved += 1

    def compact_phase(self, ms: MarkState, sd: SummaryData):
        self._adjust_pointers(ms)
        heap = self.heap
        snap = bytes(heap.arena)
        heap.cards.reset_offsets()
        tasks = {k: Region(-1, 0) for k in sd.fills}

        def process(worker, key):
            if tasks[key].claim():
                self.fill_region(key, sd.fills[key], snap, sd.regions)

        heap.gang.distribute(sorted(sd.fills, key=lambda k: (k == "young", k if k != "young" else 0)))
        heap.gang.run(process)
        for reg in sd.regions.values():
            reg.source_exhausted = True

    # -- phase 4 ---------------------------------------------------------------

    def cleanup_phase(self, sd: SummaryData):
        geo = self.geo
        heap = self.heap
        nb = geo.old_nonbda
        fill = heap.fill
        old_eden_top = geo.eden.top

        # Segment maps are rebuilt from the summary.
        for i in range(len(geo.region_seg)):
            geo.region_seg[i] = None
        for c in sd.dissolved:
            geo.drop_container(c)
        for seg in sd.release:
            seg.owner = None
            seg.next = None
        self.stats.segments_released = len(sd.release)

        nb.top = sd.nonbda_top
        for gap_start, gap_end in sd.spill_slots:
            fill(gap_start, gap_end)
        geo.spill_bytes = 0
        space_high = {sp.space_id: sp.start for sp in geo.bda_spaces}
        pre_top = {sp.space_id: sp.top for sp in geo.bda_spaces}
        for cid, chain in sd.chains.items():
            c = geo.containers[cid]
            c.head = c.tail = None
            # Compaction repacked the chain; let it grow again.
            c.degraded = False
            for slot, used, spilled, objs in chain:
                seg = Segment(slot, slot + geo.seg_size, c.space_id, top=slot + used,
                              owner=cid, spilled=spilled)
                geo._map_segment(seg, seg.start, seg.end)
                if spilled:
                    geo.spill_bytes += seg.size
                else:
                    space_high[c.space_id] = max(space_high[c.space_id], seg.end)
                if c.tail is None:
                    c.head = c.tail = seg
                else:
                    c.tail.next = seg
                    c.tail = seg
        for sp in geo.bda_spaces:
            sp.top = space_high[sp.space_id]
            sp.pool = []
            free = []
            a = sp.start
            while a + geo.seg_size <= pre_top[sp.space_id]:
                if geo.region_seg[(a - geo.old_base) // REGION_BYTES] is None:
                    seg = Segment(a, a + geo.seg_size, sp.space_id)
                    geo._map_segment(seg, seg.start, seg.end)
                    free.append(seg)
                a += geo.seg_size
            # LIFO: lowest slot handed out first.
            sp.pool = free[::-1]

        geo.eden.top = sd.eden_top
        geo.from_space.top = sd.from_top
        if sd.eden_top < old_eden_top:
            heap.arena[sd.eden_top:old_eden_top] = bytes(old_eden_top - sd.eden_top)
        heap.cards.clean_or_invalidate(heap.young_empty())
        heap.invalidate_tlabs()
        self.summary = None

    def collect(self) -> GcStats:
        heap = self.heap
        t0 = perf_counter()
        heap.gang.reseed(heap.config.seed * 1_000_003 + len(heap.gc_log))
        ms = self.mark_phase(heap.root_refs())
        t1 = perf_counter()
        sd = self.summary_phase(ms)
        t2 = perf_counter()
        self.compact_phase(ms, sd)
        t3 = perf_counter()
        self.stats.live_bytes = sd.live_bytes
        self.stats.evicted_objects = sd.evicted
        self.cleanup_phase(sd)
        t4 = perf_counter()
        heap.full_count += 1
        st = self.stats
        st.phase_s = {"mark": t1 - t0, "summary": t2 - t1, "compact": t3 - t2, "cleanup": t4 - t3}
        st.pause_s = t4 - t0
        heap._record(st)
        return st


def full_collect(heap) -> GcStats:
    return FullCollector(heap).collect()
