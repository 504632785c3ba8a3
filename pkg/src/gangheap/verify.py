"""Heap invariant checkers used by tests and ``--verify`` runs.

Each checker returns a list of human-readable violations; empty means the
invariant holds.  None of them mutate the heap.
"""

from __future__ import annotations

from gangheap.objects import CID_MASK, MARK_BIT


def reachable(heap, roots=None) -> set[int]:
    """Plain BFS over reference fields."""
    roots = heap.root_refs() if roots is None else roots
    seen = set()
    todo = [r for r in roots if r]
    while todo:
        a = todo.pop()
        if a in seen:
            continue
        seen.add(a)
        todo.extend(v for v in heap.refs_of(a) if v and v not in seen)
    return seen


def container_purity(heap) -> list[str]:
    """Every live object in an owned segment traces from that container's parent.

    Dead objects are ignored: until the next full collection they still
    occupy the segment but no longer belong to any graph.
    """
    geo = heap.geometry
    live = reachable(heap)
    bad = []
    for c in geo.containers.values():
        owned = set()
        for seg in c.segments():
            owned.update(a for a in heap.walk(seg.start, seg.top) if a in live)
        if not owned:
            continue
        from_parent = reachable(heap, [c.parent])
        stray = owned - from_parent
        if stray:
            bad.append(f"container {c.container_id}: {len(stray)} objects not reachable from parent "
                       f"{c.parent:#x}, e.g. {min(stray):#x}")
    return bad


def segment_chains(heap) -> list[str]:
    """Chains are acyclic, every owned segment is on exactly its owner's chain."""
    geo = heap.geometry
    bad = []
    on_chain = {}
    for c in geo.containers.values():
        seen = set()
        for seg in c.segments():
            if id(seg) in seen:
                bad.append(f"container {c.container_id}: cycle in segment chain")
                break
            seen.add(id(seg))
            if seg.owner != c.container_id:
                bad.append(f"container {c.container_id}: chain holds segment owned by {seg.owner}")
            if id(seg) in on_chain:
                bad.append(f"segment {seg.start:#x} on two chains")
            on_chain[id(seg)] = c.container_id
            if not seg.start <= seg.top <= seg.end:
                bad.append(f"segment {seg.start:#x}: top out of range")
    mapped = {id(s): s for s in geo.region_seg if s is not None}
    for k, seg in mapped.items():
        if seg.owner is not None and k not in on_chain:
            bad.append(f"segment {seg.start:#x} owned by {seg.owner} but orphaned")
    for sp in geo.bda_spaces:
        for seg in sp.pool:
            if seg.owner is not None:
                bad.append(f"pool segment {seg.start:#x} has owner {seg.owner}")
            if any(heap.words[a >> 3] & MARK_BIT for a in heap.walk(seg.start, seg.top)):
                bad.append(f"pool segment {seg.start:#x} holds a marked object")
        if sp.top > sp.end or sp.top < sp.start:
            bad.append(f"space {sp.name}: top out of range")
    return bad


def old_to_young_edges(heap) -> set[int]:
    """Old objects holding a young reference, by brute-force walk."""
    geo = heap.geometry
    out = set()
    for sp in geo.old_spaces:
        for a in heap.objects_in(sp):
            if any(geo.is_young(v) for v in heap.refs_of(a)):
                out.add(a)
    return out


def card_cover(heap) -> set[int]:
    """Old objects overlapping at least one dirty card."""
    cover = set()
    for sp in heap.geometry.old_spaces:
        for first, end in heap.scan_dirty_ranges(sp):
            for a in heap.walk(first, end):
                if heap.words[a >> 3] & CID_MASK:
                    cover.add(a)
    return cover


def card_completeness(heap) -> list[str]:
    missing = old_to_young_edges(heap) - card_cover(heap)
    return [f"old object {a:#x} references young but no dirty card covers it" for a in sorted(missing)]


def queue_consistency(heap) -> list[str]:
    """Each live young bda instance is queued exactly once."""
    geo = heap.geometry
    roots = heap.queue.roots
    bad = []
    if len(set(roots)) != len(roots):
        bad.append("duplicate reference queue entries")
    queued = set(roots)
    live = reachable(heap)
    for a in live:
        if geo.is_young(a) and heap.class_of(a).is_bda_class and a not in queued:
            bad.append(f"live young bda instance {a:#x} missing from the reference queue")
    return bad


def check_all(heap) -> list[str]:
    return container_purity(heap) + segment_chains(heap) + card_completeness(heap) + queue_consistency(heap)


def install(heap, sink: list | None = None):
    """Run :func:`check_all` after every collection; raise or collect violations."""

    def hook(h, stats):
        bad = check_all(h)
        if bad:
            if sink is None:
                raise AssertionError(f"{stats.kind} gc #{stats.seq}: " + "; ".join(bad[:5]))
            sink.extend(bad)

    heap.after_gc.append(hook)
    return hook
