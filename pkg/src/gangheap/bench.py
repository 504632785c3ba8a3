"""Benchmark workloads: readonly gets, map-reduce, allocation stress.

Each runner builds a fresh heap from a :class:`HeapConfig`, drives a seeded
workload against it and returns a :class:`MetricsReport`.  Memory behaviour
is measured from address traces: every managed field access during the
measured phase is recorded and replayed through LRU page models, one sized
like a dTLB for the per-operation latency model and one sized as a fraction
of the heap for page faults.
"""

from __future__ import annotations

import gc
import hashlib
import math
import random
import statistics
import threading
import time
from array import array
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from gangheap.config import PAGE_BYTES, HeapConfig
from gangheap.heap import Heap
from gangheap.kv import HASHMAP, HashMap, KvClasses
from gangheap.locality import (
    PageCacheModel,
    snapshot_metrics,
    take_snapshot,
)

WORKLOADS = ("readonly", "mapreduce", "allocstress")


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "readonly"
    entries: int = 100_000
    operations: int = 2_000_000
    threads: int = 1
    value_bytes: int = 16
    seed: int = 0
    snapshot_count: int = 7
    # 0 picks ceil(entries / container_size).
    maps: int = 0
    # Mapreduce bootstrap volume as a fraction of the heap.
    bootstrap_fraction: float = 0.5
    # Page-cache capacity as a fraction of heap pages.
    cache_fraction: float = 0.25
    # Latency model: a small LRU of pages standing in for the dTLB.
    tlb_pages: int = 64
    hit_ns: float = 1.0
    miss_ns: float = 30.0
    # Lookups box their key like a managed-language get(Long) would.
    box_keys: bool = True
    repetitions: int = 10
    warmup: int = 10

    def __post_init__(self):
        if self.kind not in WORKLOADS:
            raise ValueError(f"unknown workload {self.kind!r}")
        for name in ("entries", "operations", "value_bytes", "snapshot_count", "maps",
                     "repetitions", "warmup", "tlb_pages"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.bootstrap_fraction < 1 or not 0 <= self.cache_fraction <= 1:
            raise ValueError("fractions must lie in [0, 1)")


@dataclass
class MetricsReport:
    workload: str
    mode: str
    run_id: str = ""
    counters: dict = field(default_factory=dict)
    # (metric, snapshot_seq, value); snapshot_seq -1 for run-level metrics.
    metrics: list = field(default_factory=list)
    checksum: str = ""
    colorings: list = field(default_factory=list)
    gc: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list, repr=False)
    # Final heap geometry dump, for --debug-geometry.
    geometry: str = field(default="", repr=False)

    def add(self, metric: str, value, seq: int = -1):
        self.metrics.append((metric, seq, value))

    def value(self, metric: str, seq: int = -1):
        for m, s, v in self.metrics:
            if m == metric and s == seq:
                return v
        raise KeyError(metric)

    def series(self, metric: str) -> list:
        return [v for m, s, v in self.metrics if m == metric and s >= 0]

    def rows(self):
        for m, s, v in self.metrics:
            yield (self.run_id, self.mode, m, s, v)

    def logical(self) -> dict:
        """The parts of the report that must not depend on timing."""
        return {"counters": self.counters, "checksum": self.checksum, "colorings": self.colorings}

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("snapshots")
        d.pop("geometry")
        return d


# -- helpers ----------------------------------------------------------------------


def _gc_summary(heap) -> dict:
    log = heap.gc_log
    minors = [s for s in log if s.kind == "minor"]
    fulls = [s for s in log if s.kind == "full"]
    return {
        "minor_count": len(minors),
        "full_count": len(fulls),
        "minor_pause_s": sum(s.pause_s for s in minors),
        "full_pause_s": sum(s.pause_s for s in fulls),
        "containers_created": sum(s.containers_created for s in log),
        "gang_objects": sum(s.gang_objects for s in log),
        "objects_promoted": sum(s.objects_promoted for s in log),
        "bytes_copied": sum(s.bytes_copied for s in log),
        "degraded_containers": sum(s.degraded_containers for s in log),
        "shared_children": sum(s.shared_children for s in log),
        "segments_released": sum(s.segments_released for s in log),
        "spill_bytes": heap.geometry.spill_bytes,
    }


def _coloring_digest(snap) -> str:
    """Addresses aside, which objects got which colour: (colour, class, size) tallies."""
    tally: dict = {}
    for r in snap.records:
        key = (-1 if r.color is None else r.color, r.class_id, r.size)
        tally[key] = tally.get(key, 0) + 1
    h = hashlib.sha256(repr(sorted(tally.items())).encode())
    return h.hexdigest()[:16]


def _snapshot(heap, report: MetricsReport, roots_fn, seq: int, keep: bool):
    roots = roots_fn()
    snap = take_snapshot(heap, roots, seq=seq, label=report.workload, color=True)
    for name, value in snapshot_metrics(snap).items():
        report.add(name, value, seq)
    report.colorings.append(_coloring_digest(snap))
    if keep:
        report.snapshots.append(snap)


def _replay(trace, capacity: int) -> tuple[int, int]:
    model = PageCacheModel(capacity)
    model.run(trace)
    return model.faults, model.accesses


def _heap_pages(heap) -> int:
    return heap.config.heap_bytes // PAGE_BYTES


def _maps_for(spec: WorkloadSpec, cfg: HeapConfig) -> int:
    if spec.maps:
        return spec.maps
    cs = max(1, cfg.bda.container_size)
    return max(1, math.ceil(spec.entries / cs)) if spec.entries else 0


def _run_threads(n: int, target):
    """Run ``target(tid)`` on ``n`` mutator threads; one operation at a time holds the heap."""
    if n == 1:
        target(0)
        return
    errors = []

    def body(tid):
        try:
            target(tid)
        except BaseException as e:  # surfaced on the calling thread
            errors.append(e)

    ts = [threading.Thread(target=body, args=(t,)) for t in range(n)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    if errors:
        raise errors[0]


# -- readonly -----------------------------------------------------------------------


def run_readonly(spec: WorkloadSpec, config: HeapConfig, keep_snapshots: bool = False) -> MetricsReport:
    heap = Heap(config)
    cls = KvClasses.register(heap, spec.value_bytes)
    report = MetricsReport("readonly", config.mode)
    rng = random.Random(spec.seed)
    nmaps = _maps_for(spec, config)
    per_map = [spec.entries // nmaps + (1 if i < spec.entries % nmaps else 0) for i in range(nmaps)] if nmaps else []
    maps = [HashMap(heap, cls, n) for n in per_map]
    # Mutator thread t owns maps t, t+T, ...
    owned = [[i for i in range(nmaps) if i % spec.threads == t] for t in range(spec.threads)]
    keys: list[list[int]] = [[] for _ in range(nmaps)]
    plan = [i for i, n in enumerate(per_map) for _ in range(n)]
    rng.shuffle(plan)
    for i in plan:
        k = rng.getrandbits(63)
        while k in maps[i]:
            k = rng.getrandbits(63)
        maps[i].put_string(k, rng.randbytes(spec.value_bytes))
        keys[i].append(k)
    build_gcs = len(heap.gc_log)

    lock = threading.Lock()
    nsnap = spec.snapshot_count
    ops = spec.operations
    marks = {ops * (s + 1) // nsnap: s for s in range(nsnap)} if nsnap else {}
    trace = array("Q")
    heap.trace = trace
    lat_ns = [0] * spec.threads
    done = [0] * spec.threads
    hits = [0] * spec.threads
    per_thread_ops = ops
    boxed = cls.long
    roots_fn = lambda: [m.ref for m in maps]

    if ops == 0:
        heap.trace = None
        for s in range(nsnap):
            _snapshot(heap, report, roots_fn, s, keep_snapshots)

    def worker(tid):
        trng = random.Random(spec.seed * 7919 + tid + 1)
        mine = [i for i in owned[tid] if keys[i]]
        if not mine:
            return
        for op in range(per_thread_ops):
            i = mine[trng.randrange(len(mine))]
            k = keys[i][trng.randrange(len(keys[i]))]
            with lock:
                ngc = len(heap.gc_log)
                t0 = time.perf_counter_ns()
                if spec.box_keys:
                    heap.write_word(heap.allocate(boxed), k)
                v = maps[i].get(k)
                if v is not None:
                    heap.read_scalar(v)
                    hits[tid] += 1
                dt = time.perf_counter_ns() - t0
                if len(heap.gc_log) > ngc:
                    # Report mutator time; pauses are accounted in the GC summary.
                    dt -= int(sum(st.pause_s for st in heap.gc_log[ngc:]) * 1e9)
                lat_ns[tid] += max(0, dt)
                done[tid] += 1
                if tid == 0 and (op + 1) in marks:
                    heap.trace = None
                    _snapshot(heap, report, roots_fn, marks[op + 1], keep_snapshots)
                    heap.trace = trace

    if ops:
        _run_threads(spec.threads, worker)
    heap.trace = None
    total_ops = sum(done)
    report.counters = {"maps": nmaps, "entries": spec.entries, "gets": total_ops, "hits": sum(hits),
                       "build_gcs": build_gcs}
    report.add("get_latency_wall_ns", sum(lat_ns) / total_ops if total_ops else 0.0)
    tlb_misses, accesses = _replay(trace, spec.tlb_pages)
    modeled = (accesses * spec.hit_ns + tlb_misses * spec.miss_ns) / total_ops if total_ops else 0.0
    report.add("get_latency_model_ns", modeled)
    report.add("tlb_misses", tlb_misses)
    report.add("accesses", accesses)
    faults, _ = _replay(trace, max(0, int(_heap_pages(heap) * spec.cache_fraction)))
    report.add("page_faults", faults)
    for name in ("objects_per_page", "pages_per_color", "reference_distance"):
        vals = report.series(name)
        report.add(name, statistics.fmean(vals) if vals else 0.0)
    report.gc = _gc_summary(heap)
    report.geometry = heap.geometry.dump()
    report.checksum = hashlib.sha256(repr((total_ops, sum(hits))).encode()).hexdigest()[:16]
    return report


# -- mapreduce --------------------------------------------------------------------------

VALUE_RANGE = 8
ENTRY_BYTES_ESTIMATE = 96


def mapreduce_inputs(spec: WorkloadSpec, config: HeapConfig) -> list[list[tuple[int, int]]]:
    """Seeded input maps as plain (key, value) lists.

    ``entries`` is the key space; the number of pairs comes from
    ``bootstrap_fraction`` of the heap, spread over maps of at most
    ``container_size`` keys (or ``maps`` maps when given).
    """
    rng = random.Random(spec.seed)
    keyspace = spec.entries
    if keyspace == 0:
        return []
    total = max(1, int(config.heap_bytes * spec.bootstrap_fraction) // ENTRY_BYTES_ESTIMATE)
    per = min(keyspace, max(1, config.bda.container_size))
    nmaps = spec.maps or max(1, math.ceil(total / per))
    per = min(keyspace, max(1, total // nmaps))
    return [[(k, rng.randrange(VALUE_RANGE)) for k in rng.sample(range(keyspace), per)]
            for _ in range(nmaps)]


def _partitions(nmaps: int) -> int:
    return max(1, nmaps // 4)


def mapreduce_reference(inputs) -> str:
    """The same computation on plain dictionaries."""
    parts = [dict() for _ in range(_partitions(len(inputs)))]
    for i, pairs in enumerate(inputs):
        part = parts[i % len(parts)]
        for k, v in pairs:
            part[k] = part.get(k, 0) + (v << 32 | 1)
    result: dict = {}
    for part in parts:
        for k, packed in part.items():
            result[k] = result.get(k, 0) + packed
    return _mr_checksum(result.items())


def _mr_checksum(pairs) -> str:
    h = hashlib.sha256()
    for k, packed in sorted(pairs):
        h.update(repr((k, packed >> 32, packed & 0xFFFFFFFF)).encode())
    return h.hexdigest()[:16]


def run_mapreduce(spec: WorkloadSpec, config: HeapConfig, keep_snapshots: bool = False) -> MetricsReport:
    """Group input pairs by key per partition, then merge partitions.

    Each key's group is a packed (value sum, pair count) long.  Input maps are
    dropped once mapped and partitions once reduced, so the live set shifts
    over the run the way a real job's does.
    """
    heap = Heap(config)
    cls = KvClasses.register(heap, spec.value_bytes)
    report = MetricsReport("mapreduce", config.mode)
    inputs = mapreduce_inputs(spec, config)
    nparts = _partitions(len(inputs)) if inputs else 0

    # Bootstrap: the input maps, built interleaved so eden mixes them.
    maps = [HashMap(heap, cls, len(p)) for p in inputs]
    order = [(i, j) for i, p in enumerate(inputs) for j in range(len(p))]
    random.Random(spec.seed + 1).shuffle(order)
    for i, j in order:
        k, v = inputs[i][j]
        maps[i].put_long(k, v)
    bootstrap_gcs = len(heap.gc_log)

    live: list[Optional[HashMap]] = list(maps)
    # Presized to their key counts: refilling a small table in another table's
    # slot order piles keys into long probe runs.
    part_keys = [set() for _ in range(nparts)]
    for i, p in enumerate(inputs):
        part_keys[i % nparts].update(k for k, _ in p)
    parts: list[Optional[HashMap]] = [HashMap(heap, cls, len(ks)) for ks in part_keys]
    result = HashMap(heap, cls, len(set().union(*part_keys)))
    roots_fn = lambda: [m.ref for m in live if m] + [p.ref for p in parts if p] + [result.ref]
    nsnap = spec.snapshot_count
    seq = [0]

    def snap():
        if seq[0] < nsnap:
            saved = heap.trace
            heap.trace = None
            _snapshot(heap, report, roots_fn, seq[0], keep_snapshots)
            heap.trace = saved
            seq[0] += 1

    snap()
    trace = array("Q")
    heap.trace = trace
    t0 = time.perf_counter()
    steps = len(maps) + nparts
    checkpoints = {max(1, steps * (s + 1) // max(1, nsnap - 1)) for s in range(max(0, nsnap - 1))}
    step = 0
    # Map: fold each input's pairs into its partition.
    for i, m in enumerate(maps):
        part = parts[i % nparts]
        for k, v in m.items_long():
            part.add_long(k, v << 32 | 1)
        m.release()
        live[i] = None
        step += 1
        if step in checkpoints:
            snap()
    # Reduce: merge every partition into the result.
    for r, part in enumerate(parts):
        for k, packed in part.items_long():
            result.add_long(k, packed)
        part.release()
        parts[r] = None
        step += 1
        if step in checkpoints:
            snap()
    t1 = time.perf_counter()
    heap.trace = None
    while seq[0] < nsnap:
        snap()

    out = list(result.items_long())
    report.checksum = _mr_checksum(out)
    report.counters = {"maps": len(maps), "pairs": sum(len(p) for p in inputs), "partitions": nparts,
                       "result_keys": len(out), "bootstrap_gcs": bootstrap_gcs, "accesses": len(trace)}
    capacity = max(0, int(_heap_pages(heap) * spec.cache_fraction))
    faults, accesses = _replay(trace, capacity)
    report.add("page_faults", faults)
    report.add("page_cache_capacity", capacity)
    report.add("accesses", accesses)
    report.add("phase_s", t1 - t0)
    for name in ("objects_per_page", "pages_per_color", "reference_distance"):
        vals = report.series(name)
        report.add(name, statistics.fmean(vals) if vals else 0.0)
    report.gc = _gc_summary(heap)
    report.geometry = heap.geometry.dump()
    return report


# -- allocation stress -------------------------------------------------------------------

STRESS_CLASSES = [("Obj0", 0, 8), ("Obj1", 1, 0), ("Obj2", 2, 0), ("Obj3", 0, 24),
                  ("Obj4", 3, 8), ("Obj5", 1, 16), ("Obj6", 2, 32), ("Obj7", 4, 0)]
STRESS_LIVE_SLOTS = 256


def stress_config(config: HeapConfig, tracked: int) -> HeapConfig:
    """``config`` with the first ``tracked`` stress classes as bda classes.

    Stress instances own no large structure, so each container is sized for
    a single object (one region per segment).
    """
    names = tuple(n for n, _, _ in STRESS_CLASSES[:tracked])
    if config.mode == "base" or tracked == 0:
        return replace(config, bda=replace(config.bda, classes=()))
    return replace(config, bda=replace(config.bda, classes=names, container_size=1))


def stress_plan(count: int, seed: int) -> list:
    """(class index, keep, live slot) per allocation."""
    rng = random.Random(seed)
    return [(rng.randrange(len(STRESS_CLASSES)), rng.random() < 0.05, rng.randrange(STRESS_LIVE_SLOTS))
            for _ in range(count)]


class _AllocStress:
    def __init__(self, config: HeapConfig, plan: list):
        self.heap = heap = Heap(config)
        self.descs = [heap.register_class(n, r, s) for n, r, s in STRESS_CLASSES]
        self.plan = plan
        self.live = [heap.handle(0) for _ in range(STRESS_LIVE_SLOTS)]
        self.tracked_allocs = 0

    def run_once(self) -> tuple[float, float]:
        """(wall seconds, wall seconds minus collection pauses) for one pass."""
        heap = self.heap
        descs = self.descs
        live = self.live
        alloc = heap.allocate
        ngc = len(heap.gc_log)
        enabled = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            for ci, keep, slot in self.plan:
                a = alloc(descs[ci])
                if keep:
                    live[slot].ref = a
            wall = time.perf_counter() - t0
        finally:
            if enabled:
                gc.enable()
        return wall, wall - sum(st.pause_s for st in heap.gc_log[ngc:])


def run_allocstress(spec: WorkloadSpec, config: HeapConfig, tracked_counts=(0, 1, 3)) -> MetricsReport:
    count = spec.operations
    report = MetricsReport("allocstress", config.mode)
    plan = stress_plan(count, spec.seed)
    runs = {"base": _AllocStress(stress_config(replace(config, mode="base"), 0), plan)}
    for t in tracked_counts:
        runs[f"tracked{t}"] = _AllocStress(stress_config(replace(config, mode="bda"), t), plan)
    times = {name: [] for name in runs}
    walls = {name: [] for name in runs}
    for _ in range(spec.warmup):
        for r in runs.values():
            r.run_once()
    # Interleave configurations, rotating the order, so drift hits all of them alike.
    order = list(runs.items())
    for rep in range(max(1, spec.repetitions)):
        k = rep % len(order)
        for name, r in order[k:] + order[:k]:
            wall, mutator = r.run_once()
            walls[name].append(wall)
            times[name].append(mutator)
    # Overhead is on wall time; the allocation path alone (collection
    # pauses subtracted) is reported next to it.
    base_wall = statistics.median(walls["base"])
    base_mut = statistics.median(times["base"])
    for name, ws in walls.items():
        wmed = statistics.median(ws)
        mmed = statistics.median(times[name])
        report.add(f"{name}_median_s", wmed)
        report.add(f"{name}_alloc_median_s", mmed)
        if name != "base":
            report.add(f"{name}_overhead", wmed / base_wall - 1.0 if base_wall else float("nan"))
            report.add(f"{name}_alloc_overhead", mmed / base_mut - 1.0 if base_mut else float("nan"))
            lo, hi = _ratio_ci(ws, walls["base"], spec.seed)
            report.add(f"{name}_overhead_ci_lo", lo - 1.0)
            report.add(f"{name}_overhead_ci_hi", hi - 1.0)
    counters = {"allocations_per_rep": count, "repetitions": spec.repetitions, "warmup": spec.warmup}
    for name, r in runs.items():
        desc_bda = [d.is_bda_class for d in r.descs]
        per_rep = sum(1 for ci, _, _ in r.plan if desc_bda[ci])
        counters[f"{name}_tracked_allocations_per_rep"] = per_rep
        counters[f"{name}_gcs"] = len(r.heap.gc_log)
    report.counters = counters
    report.gc = {name: _gc_summary(r.heap) for name, r in runs.items()}
    report.geometry = list(runs.values())[-1].heap.geometry.dump()
    return report


def _ratio_ci(a, b, seed: int, n: int = 2000, level: float = 0.95) -> tuple[float, float]:
    """Bootstrap interval for median(a) / median(b)."""
    if not a or not b:
        return float("nan"), float("nan")
    rng = random.Random(seed)
    stats = []
    for _ in range(n):
        ra = statistics.median(rng.choices(a, k=len(a)))
        rb = statistics.median(rng.choices(b, k=len(b)))
        stats.append(ra / rb)
    stats.sort()
    k = int((1 - level) / 2 * n)
    return stats[k], stats[n - 1 - k]


def run_workload(spec: WorkloadSpec, config: HeapConfig, keep_snapshots: bool = False) -> MetricsReport:
    if spec.kind == "readonly":
        return run_readonly(spec, config, keep_snapshots)
    if spec.kind == "mapreduce":
        return run_mapreduce(spec, config, keep_snapshots)
    return run_allocstress(spec, config)


def default_bda_classes(kind: str) -> tuple:
    return (HASHMAP,) if kind in ("readonly", "mapreduce") else ()
