"""Locality measurements over heap snapshots.

A snapshot is the live object graph at a safepoint: one record per object
with its address, size, class and outgoing references.  Objects are coloured
by the first root (in root order) that reaches them, and the colouring feeds
objects-per-page and reference-distance metrics.  Page faults are estimated
with an LRU page cache over an address trace.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from gangheap.config import FIELD_BYTES, PAGE_BYTES
from gangheap.errors import SnapshotParseError
from gangheap.objects import CID_MASK, NREF_SHIFT

log = logging.getLogger(__name__)

FORMAT_LINE = "gangheap-snapshot 1"


class ObjectRecord(NamedTuple):
    address: int
    size: int
    class_id: int
    refs: tuple = ()
    color: Optional[int] = None


@dataclass
class HeapSnapshot:
    records: list = field(default_factory=list)
    seq: int = 0
    label: str = ""

    def __len__(self):
        return len(self.records)

    def by_address(self) -> dict:
        return {r.address: r for r in self.records}

    def validate(self):
        index = self.by_address()
        if len(index) != len(self.records):
            raise ValueError("duplicate addresses in snapshot")
        for r in self.records:
            for v in r.refs:
                if v and v not in index:
                    raise ValueError(f"{r.address:#x} references {v:#x}, which is not in the snapshot")

    def __eq__(self, other):
        if not isinstance(other, HeapSnapshot):
            return NotImplemented
        return (self.seq, self.label, sorted(self.records, key=lambda r: r.address)) == \
            (other.seq, other.label, sorted(other.records, key=lambda r: r.address))


def take_snapshot(heap, roots: Optional[Sequence[int]] = None, seq: int = 0, label: str = "",
                  color: bool = False) -> HeapSnapshot:
    """Records for every object reachable from ``roots`` (default: all handles).

    With ``color`` the traversal also assigns first-root colours, giving the
    same result as :func:`color_subgraphs` on the uncoloured snapshot.
    """
    roots = heap.root_refs() if roots is None else roots
    w = heap.words
    base_size = heap.registry.base_size
    seen: dict[int, Optional[int]] = {}
    recs = []
    append = recs.append
    for ci, root in enumerate(roots):
        if not root or root in seen:
            continue
        c = ci if color else None
        seen[root] = c
        q = deque([root])
        pop = q.popleft
        push = q.append
        while q:
            a = pop()
            i = a >> 3
            w0 = w[i]
            n = w0 >> NREF_SHIFT
            refs = tuple(w[i + 2:i + 2 + n])
            cid = w0 & CID_MASK
            append(ObjectRecord(a, base_size[cid] + n * FIELD_BYTES, cid, refs, c))
            for v in refs:
                if v and v not in seen:
                    seen[v] = c
                    push(v)
    recs.sort()
    return HeapSnapshot(recs, seq, label)


def write_snapshot(snap: HeapSnapshot, path) -> None:
    with open(path, "w") as f:
        f.write(f"{FORMAT_LINE}\n")
        f.write(f"seq,{snap.seq}\n")
        f.write(f"label,{snap.label}\n")
        for r in snap.records:
            color = "-" if r.color is None else str(r.color)
            refs = " ".join(format(v, "x") for v in r.refs)
            f.write(f"{r.address:x},{r.size},{r.class_id},{color},{refs}\n")


def read_snapshot(path) -> HeapSnapshot:
    with open(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != FORMAT_LINE:
        raise SnapshotParseError(1, f"expected {FORMAT_LINE!r}")
    snap = HeapSnapshot()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            if parts[0] == "seq" and len(parts) == 2:
                snap.seq = int(parts[1])
            elif parts[0] == "label":
                snap.label = line[len("label,"):]
            elif len(parts) == 5:
                addr, size, cid, color, refs = parts
                snap.records.append(ObjectRecord(
                    int(addr, 16), int(size), int(cid),
                    tuple(int(v, 16) for v in refs.split()),
                    None if color == "-" else int(color)))
            else:
                raise SnapshotParseError(lineno, f"expected 5 fields, got {len(parts)}")
        except ValueError as e:
            if isinstance(e, SnapshotParseError):
                raise
            raise SnapshotParseError(lineno, str(e)) from None
    return snap


def color_subgraphs(snap: HeapSnapshot, roots: Sequence[int]) -> HeapSnapshot:
    """Colour ``i`` for objects first reached from ``roots[i]``; others stay uncoloured.

    Roots are processed one after another, each with a full breadth-first
    search over still-uncoloured objects, so a child shared by two roots
    takes the colour of the earlier one.
    """
    index = snap.by_address()
    for r in roots:
        if r not in index:
            raise KeyError(f"root {r:#x} not in snapshot")
    color: dict[int, int] = {}
    for i, r in enumerate(roots):
        if r in color:
            continue
        color[r] = i
        q = deque([r])
        while q:
            a = q.popleft()
            for v in index[a].refs:
                if v and v not in color:
                    color[v] = i
                    q.append(v)
    get = color.get
    recs = [rec._replace(color=get(rec.address)) for rec in snap.records]
    return HeapSnapshot(recs, snap.seq, snap.label)


def objects_per_page(snap: HeapSnapshot, page_bytes: int = PAGE_BYTES) -> float:
    """Mean object count over (page, colour) pairs; uncoloured objects are skipped."""
    counts: dict = {}
    for r in snap.records:
        if r.color is None:
            continue
        key = (r.address // page_bytes, r.color)
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        log.warning("objects_per_page: no coloured objects, reporting 0")
        return 0.0
    return sum(counts.values()) / len(counts)


def pages_per_color(snap: HeapSnapshot, page_bytes: int = PAGE_BYTES) -> float:
    """Mean number of distinct pages a colour's objects start on."""
    pages: dict = {}
    for r in snap.records:
        if r.color is not None:
            pages.setdefault(r.color, set()).add(r.address // page_bytes)
    if not pages:
        return 0.0
    return sum(len(p) for p in pages.values()) / len(pages)


def reference_distance(snap: HeapSnapshot) -> float:
    """Mean |dst - src| over edges whose ends share a colour."""
    index = snap.by_address()
    total = 0
    n = 0
    for r in snap.records:
        if r.color is None:
            continue
        for v in r.refs:
            t = index.get(v)
            if t is not None and t.color == r.color:
                total += abs(v - r.address)
                n += 1
    return total / n if n else 0.0


class PageCacheModel:
    """LRU set of resident pages with a fault counter."""

    def __init__(self, capacity: int, page_bytes: int = PAGE_BYTES):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.page_bytes = page_bytes
        self.faults = 0
        self.accesses = 0
        self._resident: OrderedDict = OrderedDict()

    def access(self, address: int) -> bool:
        """Touch ``address``; True on a fault."""
        self.accesses += 1
        page = address // self.page_bytes
        res = self._resident
        if page in res:
            res.move_to_end(page)
            return False
        self.faults += 1
        if self.capacity:
            res[page] = None
            if len(res) > self.capacity:
                res.popitem(last=False)
        return True

    def run(self, trace: Iterable[int]) -> int:
        for a in trace:
            self.access(a)
        return self.faults

    @property
    def resident(self) -> int:
        return len(self._resident)


def simulate_page_faults(trace: Iterable[int], capacity: int, page_bytes: int = PAGE_BYTES) -> int:
    return PageCacheModel(capacity, page_bytes).run(trace)


def snapshot_metrics(snap: HeapSnapshot, page_bytes: int = PAGE_BYTES) -> dict:
    """objects_per_page, pages_per_color and reference_distance in one pass."""
    pairs: dict = {}
    color_of = {}
    for r in snap.records:
        c = r.color
        if c is not None:
            key = (r.address // page_bytes, c)
            pairs[key] = pairs.get(key, 0) + 1
            color_of[r.address] = c
    dist = 0
    edges = 0
    get = color_of.get
    for r in snap.records:
        c = r.color
        if c is None:
            continue
        a = r.address
        for v in r.refs:
            if v and get(v) == c:
                dist += abs(v - a)
                edges += 1
    colors = {c for _, c in pairs}
    if not pairs:
        log.warning("objects_per_page: no coloured objects, reporting 0")
    return {
        "objects": len(snap),
        "objects_per_page": sum(pairs.values()) / len(pairs) if pairs else 0.0,
        "pages_per_color": len(pairs) / len(colors) if colors else 0.0,
        "reference_distance": dist / edges if edges else 0.0,
    }


def write_metric_rows(path, rows: Iterable[tuple]) -> None:
    """Append (snapshot_seq, metric_name, value) rows, writing a header on creation."""
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        wr = csv.writer(f)
        if new:
            wr.writerow(["snapshot_seq", "metric", "value"])
        wr.writerows(rows)
