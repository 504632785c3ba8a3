"""Stop-the-world parallel copying collection of the young generation.

Order of work inside one cycle:

1. collect old-to-young slots from the dirty cards of every old space, one
   space at a time so no scan crosses a space boundary;
2. if bda roots are queued, mark the live young graph so dead queued roots
   can be dropped;
3. drain the reference queue: every live root gets a container and is copied
   together with its children (depth-first, bounded by the delegation level)
   into the container's segments; young objects stored into container
   objects since the last cycle are gang-copied into that container too;
4. general evacuation by the worker gang: roots, old-to-young slots and the
   fields of everything copied so far, with tenuring into old_nonbda.
"""

from __future__ import annotations

from time import perf_counter

from gangheap.config import FIELD_BYTES, HEADER_BYTES
from gangheap.errors import OutOfMemoryError, SegmentAllocationError
from gangheap.objects import AGE_MASK, AGE_SHIFT, CID_MASK, MARK_BIT, MAX_AGE, NREF_SHIFT
from gangheap.stats import GcStats

# Array reference fields are scanned in chunks so other workers can steal the rest.
ARRAY_CHUNK = 64
# Old-to-young slots are dealt to workers in stripes of this many bytes.
STRIPE_BYTES = 64 * 512


class MinorCollector:
    def __init__(self, heap):
        self.heap = heap
        self.geo = heap.geometry
        self.w = heap.words
        self.arena = heap.arena
        self.bs = heap.registry.base_size
        cfg = heap.config
        self.threshold = cfg.tenuring_threshold
        self.young_plab = cfg.young_plab_bytes
        self.old_plab = cfg.old_plab_bytes
        self.stats = GcStats("minor", seq=len(heap.gc_log))
        self.marked: set = set()
        bda = cfg.bda
        self.gang_depth = None if cfg.gang_full_closure else bda.delegation_level
        self.gang_enabled = cfg.bda_enabled

    # -- allocation in destination spaces --------------------------------------

    def _alloc_to(self, worker, size: int) -> int:
        p = worker.to_plab
        a = p.top
        if a + size <= p.end:
            p.top = a + size
            return a
        to = self.geo.to_space
        if size > self.young_plab // 2:
            return to.bump(size)
        with to.lock:
            take = min(self.young_plab, to.free)
            if take < size:
                return -1
            start = to.top
            to.top += take
        self.heap.fill(p.top, p.end)
        p.top, p.end = start + size, start + take
        return start

    def alloc_old(self, worker, size: int) -> int:
        p = worker.old_plab
        a = p.top
        if a + size <= p.end:
            p.top = a + size
            return a
        nb = self.geo.old_nonbda
        if size > self.old_plab // 2:
            a = nb.bump(size)
        else:
            with nb.lock:
                take = min(self.old_plab, nb.free)
                if take < size:
                    a = -1
                else:
                    start = nb.top
                    nb.top += take
                    self.heap.fill(p.top, p.end)
                    p.top, p.end = start + size, start + take
                    a = start
        if a < 0:
            raise OutOfMemoryError("old generation exhausted during minor collection")
        return a

    def _retire(self, gang):
        fill = self.heap.fill
        for w in gang:
            fill(w.to_plab.top, w.to_plab.end)
            fill(w.old_plab.top, w.old_plab.end)
            w.to_plab.top = w.to_plab.end = 0
            w.old_plab.top = w.old_plab.end = 0

    # -- copying --------------------------------------------------------------

    def _copy(self, src: int, dest: int, size: int, age_inc: int):
        w = self.w
        self.arena[dest:dest + size] = self.arena[src:src + size]
        w0 = w[src >> 3] & ~MARK_BIT
        if age_inc:
            age = (w0 >> AGE_SHIFT) & AGE_MASK
            if age < MAX_AGE:
                w0 += 1 << AGE_SHIFT
        w[dest >> 3] = w0
        w[(dest >> 3) + 1] = 0
        w[(src >> 3) + 1] = dest
        st = self.stats
        st.objects_copied += 1
        st.bytes_copied += size

    def _size(self, a: int) -> int:
        w0 = self.w[a >> 3]
        return self.bs[w0 & CID_MASK] + (w0 >> NREF_SHIFT) * FIELD_BYTES

    def evacuate(self, worker, v: int) -> int:
        w = self.w
        fwd = w[(v >> 3) + 1]
        if fwd:
            return fwd
        w0 = w[v >> 3]
        n = w0 >> NREF_SHIFT
        size = self.bs[w0 & CID_MASK] + n * FIELD_BYTES
        if (w0 >> AGE_SHIFT) & AGE_MASK >= self.threshold:
            dest = -1
        else:
            dest = self._alloc_to(worker, size)
        if dest < 0:
            dest = self.alloc_old(worker, size)
            self._copy(v, dest, size, 0)
            self.heap.cards.record_object(dest, size)
            self.stats.objects_promoted += 1
        else:
            self._copy(v, dest, size, 1)
        if n:
            worker.queue.push((dest, 0) if n > ARRAY_CHUNK else dest)
        return dest

    # -- gang promotion -----------------------------------------------------------

    def _gang_place(self, worker, c, a: int, size: int) -> int:
        """Copy one object into container ``c``; plain old placement if it can't."""
        geo = self.geo
        dest = -1
        if not c.degraded and size <= geo.seg_size:
            seg = c.tail
            if seg is None or seg.end - seg.top < size:
                try:
                    seg = geo.allocate_segment(c.space_id, c)
                except SegmentAllocationError:
                    seg = None
                    c.degraded = True
                    self.stats.degraded_containers += 1
            if seg is not None:
                dest = seg.top
                seg.top = dest + size
                self.stats.gang_objects += 1
        if dest < 0:
            dest = self.alloc_old(worker, size)
            self.stats.objects_promoted += 1
        self._copy(a, dest, size, 0)
        self.heap.cards.record_object(dest, size)
        return dest

    def gang_copy(self, worker, c, start: int, depth_left):
        """Depth-first copy of ``start`` and its young children into ``c``."""
        w = self.w
        geo = self.geo
        ylo, yhi = geo.young_start, geo.young_end
        stack = [(start, 0)]
        first = 0
        while stack:
            a, d = stack.pop()
            fwd = w[(a >> 3) + 1]
            if fwd:
                seg = geo.segment_at(fwd)
                if seg is None or seg.owner != c.container_id:
                    self.stats.shared_children += 1
                    self.heap.shared_events += 1
                continue
            dest = self._gang_place(worker, c, a, self._size(a))
            if not first:
                first = dest
            n = w[dest >> 3] >> NREF_SHIFT
            if n:
                worker.queue.push((dest, 0) if n > ARRAY_CHUNK else dest)
            if depth_left is None or d < depth_left:
                i = a >> 3
                n = w[i] >> NREF_SHIFT
                for k in range(n - 1, -1, -1):
                    v = w[i + 2 + k]
                    if ylo <= v < yhi:
                        stack.append((v, d + 1))
        return first

    def gang_promote(self, worker, root: int):
        heap = self.heap
        space_id = heap.registry.bda_space[self.w[root >> 3] & CID_MASK]
        c = self.geo.new_container(space_id, 0)
        self.stats.containers_created += 1
        c.parent = self.gang_copy(worker, c, root, self.gang_depth)
        if c.head is None:
            self.geo.drop_container(c)

    def drain_reference_queue(self) -> int:
        w = self.w
        roots = self.heap.queue.take()
        # Most queued roots die young; keep the marked ones in queue order.
        marked = list(filter(self.marked.__contains__, roots))
        # A forwarded root was already placed as a child of an earlier root.
        live = [a for a in marked if not w[(a >> 3) + 1]]
        self.stats.queue_dropped += len(roots) - len(live)
        self.stats.shared_children += len(marked) - len(live)
        self.heap.gang.claim_each(live, self._promote_if_unforwarded)
        self.stats.queue_drained = len(roots)
        return len(roots)

    def _promote_if_unforwarded(self, worker, a):
        if self.w[(a >> 3) + 1]:
            self.stats.shared_children += 1
            return
        self.gang_promote(worker, a)

    def _container_closure(self, c) -> set:
        """Objects of ``c`` reachable from its parent through the container."""
        geo = self.geo
        w = self.w
        cid = c.container_id
        seen = {c.parent}
        stack = [c.parent]
        while stack:
            a = stack.pop()
            i = a >> 3
            for v in w[i + 2:i + 2 + (w[i] >> NREF_SHIFT)]:
                if v and v not in seen:
                    seg = geo.segment_at(v)
                    if seg is not None and seg.owner == cid:
                        seen.add(v)
                        stack.append(v)
        return seen

    def extend_containers(self, slots):
        """Young objects stored into container objects join that container.

        Only holders still attached to the container parent count; a holder
        the mutator has unlinked would drag the new object into a container
        it does not belong to.
        """
        geo = self.geo
        w = self.w
        depth = None if self.gang_depth is None else max(0, self.gang_depth - 1)
        closures: dict[int, set] = {}
        items = []
        for s, holder in slots:
            seg = geo.segment_at(holder)
            if seg is None or seg.owner is None:
                continue
            c = geo.containers.get(seg.owner)
            if c is None or c.degraded:
                continue
            if holder != c.parent:
                members = closures.get(c.container_id)
                if members is None:
                    members = closures[c.container_id] = self._container_closure(c)
                if holder not in members:
                    continue
            v = w[s >> 3]
            if not w[(v >> 3) + 1]:
                items.append((c, v))
        self.heap.gang.claim_each(items, lambda wk, it: self.gang_copy(wk, it[0], it[1], depth))

    # -- cycle ------------------------------------------------------------------

    def old_to_young_slots(self) -> list[tuple[int, int]]:
        heap = self.heap
        geo = self.geo
        w = self.w
        bs = self.bs
        ylo, yhi = geo.young_start, geo.young_end
        out = []
        for space in geo.old_spaces:
            for lo, hi, first, end in heap._dirty_pieces(space):
                o = first
                while o < end:
                    w0 = w[o >> 3]
                    cid = w0 & CID_MASK
                    n = w0 >> NREF_SHIFT
                    if cid == 0:
                        o += n
                        continue
                    fb = o + HEADER_BYTES
                    k0 = max(0, (lo - fb + 7) >> 3)
                    k1 = min(n, (hi - fb + 7) >> 3)
                    base = fb >> 3
                    for k in range(k0, k1):
                        v = w[base + k]
                        if ylo <= v < yhi:
                            out.append((fb + (k << 3), o))
                    o += bs[cid] + n * FIELD_BYTES
        heap.cards.clear()
        return out

    def mark_young(self, roots, slots):
        w = self.w
        ylo, yhi = self.geo.young_start, self.geo.young_end
        stack = [r for r in roots if ylo <= r < yhi]
        stack.extend(w[s >> 3] for s, _ in slots)
        self.marked = marked = set()
        while stack:
            a = stack.pop()
            i = a >> 3
            w0 = w[i]
            if w0 & MARK_BIT:
                continue
            w[i] = w0 | MARK_BIT
            marked.add(a)
            n = w0 >> NREF_SHIFT
            for v in w[i + 2:i + 2 + n]:
                if ylo <= v < yhi and not w[v >> 3] & MARK_BIT:
                    stack.append(v)

    def _process(self, worker, t):
        w = self.w
        geo = self.geo
        ylo, yhi = geo.young_start, geo.young_end
        if type(t) is tuple:
            o, start = t
            n = w[o >> 3] >> NREF_SHIFT
            stop = start + ARRAY_CHUNK
            if stop < n:
                worker.queue.push((o, stop))
            else:
                stop = n
        elif t & 1:
            s = t - 1
            v = w[s >> 3]
            if ylo <= v < yhi:
                nv = self.evacuate(worker, v)
                w[s >> 3] = nv
                if ylo <= nv < yhi:
                    self.heap.cards.dirty_on_store(s)
            return
        else:
            o = t
            start = 0
            stop = w[o >> 3] >> NREF_SHIFT
        base = (o >> 3) + 2
        old = geo.old_base <= o < geo.old_end
        cards = self.heap.cards
        for k in range(start, stop):
            v = w[base + k]
            if ylo <= v < yhi:
                nv = self.evacuate(worker, v)
                w[base + k] = nv
                if old and ylo <= nv < yhi:
                    cards.dirty_on_store((base + k) << 3)

    def collect(self) -> GcStats:
        t0 = perf_counter()
        heap = self.heap
        geo = self.geo
        gang = heap.gang
        gang.reseed(heap.config.seed * 1_000_003 + len(heap.gc_log))
        geo.nonbda_reserve = heap.young_used() + 2 * len(gang) * self.old_plab

        slots = self.old_to_young_slots()
        handles = heap.handles()
        if self.gang_enabled and heap.queue.roots:
            self.mark_young([h.ref for h in handles], slots)
            self.drain_reference_queue()
        else:
            heap.queue.take()
        if self.gang_enabled and geo.containers:
            self.extend_containers(slots)
        geo.nonbda_reserve = 0

        ylo, yhi = geo.young_start, geo.young_end
        workers = gang.workers
        nw = len(workers)
        for i, h in enumerate(handles):
            if ylo <= h.ref < yhi:
                h.ref = self.evacuate(workers[i % nw], h.ref)
        stripe = -1
        k = -1
        for s, _ in slots:
            sid = (s - geo.old_base) // STRIPE_BYTES
            if sid != stripe:
                stripe = sid
                k += 1
            workers[k % nw].queue.push(s + 1)
        gang.run(self._process)
        self._retire(gang)

        eden = geo.eden
        self.arena[eden.start:eden.top] = bytes(eden.top - eden.start)
        eden.reset()
        old_from = geo.from_space
        geo.from_space, geo.to_space = geo.to_space, old_from
        geo.from_space.name, geo.to_space.name = "from", "to"
        geo.to_space.reset()
        heap.invalidate_tlabs()
        heap.minor_count += 1
        self.stats.pause_s = perf_counter() - t0
        heap._record(self.stats)
        return self.stats


def minor_collect(heap) -> GcStats:
    return MinorCollector(heap).collect()
