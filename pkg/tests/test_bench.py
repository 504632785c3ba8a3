import pytest

from gangheap import BdaConfig, HeapConfig
from gangheap.bench import (
    STRESS_CLASSES, WorkloadSpec, mapreduce_inputs, mapreduce_reference, run_allocstress, run_mapreduce,
    run_readonly, stress_plan,
)
from gangheap.kv import HASHMAP


def cfg(mode="bda", heap_bytes=4 << 20, container_size=100):
    return HeapConfig(heap_bytes=heap_bytes, mode=mode,
                      bda=BdaConfig(classes=(HASHMAP,), container_size=container_size))


def small(kind, **kw):
    base = dict(kind=kind, entries=2000, operations=3000, snapshot_count=3, seed=5)
    base.update(kw)
    return WorkloadSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(kind="scan")
    with pytest.raises(ValueError):
        WorkloadSpec(entries=-1)
    with pytest.raises(ValueError):
        WorkloadSpec(threads=0)
    with pytest.raises(ValueError):
        WorkloadSpec(cache_fraction=1.5)


def test_readonly_empty():
    rep = run_readonly(small("readonly", entries=0, operations=0), cfg())
    assert rep.counters["gets"] == 0
    assert rep.value("page_faults") == 0
    assert rep.value("accesses") == 0
    assert rep.value("objects_per_page") == 0.0


def test_readonly_counts_and_hits():
    rep = run_readonly(small("readonly"), cfg())
    assert rep.counters["gets"] == 3000
    assert rep.counters["hits"] == 3000
    assert rep.counters["maps"] == 20
    assert len(rep.colorings) == 3
    assert len(rep.series("objects_per_page")) == 3


def test_readonly_deterministic():
    a = run_readonly(small("readonly"), cfg())
    b = run_readonly(small("readonly"), cfg())
    assert a.logical() == b.logical()
    assert a.value("page_faults") == b.value("page_faults")


def test_readonly_threads_split_operations():
    rep = run_readonly(small("readonly", threads=3, operations=500), cfg())
    assert rep.counters["gets"] == 1500


def test_readonly_bda_packs_maps_tighter():
    spec = small("readonly", entries=4000)
    base = run_readonly(spec, cfg("base", heap_bytes=1 << 20))
    bda = run_readonly(spec, cfg("bda", heap_bytes=1 << 20))
    assert bda.gc["containers_created"] == 40
    assert bda.value("objects_per_page") > base.value("objects_per_page")


def test_mapreduce_single_map_single_key():
    spec = small("mapreduce", entries=1, maps=1)
    c = cfg()
    inputs = mapreduce_inputs(spec, c)
    assert len(inputs) == 1 and len(inputs[0]) == 1
    rep = run_mapreduce(spec, c)
    assert rep.counters["result_keys"] == 1
    assert rep.checksum == mapreduce_reference(inputs)


@pytest.mark.parametrize("mode", ["base", "bda"])
def test_mapreduce_matches_reference(mode):
    spec = small("mapreduce", entries=500)
    c = cfg(mode, heap_bytes=2 << 20)
    rep = run_mapreduce(spec, c)
    assert rep.checksum == mapreduce_reference(mapreduce_inputs(spec, c))
    assert rep.gc["minor_count"] > 0


def test_mapreduce_empty():
    rep = run_mapreduce(small("mapreduce", entries=0), cfg())
    assert rep.counters["pairs"] == 0
    assert rep.value("page_faults") == 0


def test_mapreduce_deterministic():
    spec = small("mapreduce", entries=500)
    a = run_mapreduce(spec, cfg(heap_bytes=2 << 20))
    b = run_mapreduce(spec, cfg(heap_bytes=2 << 20))
    assert a.logical() == b.logical()


def test_stress_plan_seeded():
    assert stress_plan(100, 3) == stress_plan(100, 3)
    assert stress_plan(100, 3) != stress_plan(100, 4)
    assert all(0 <= ci < len(STRESS_CLASSES) for ci, _, _ in stress_plan(100, 3))


def test_allocstress_tracked_counts():
    spec = WorkloadSpec(kind="allocstress", operations=4000, repetitions=2, warmup=1, seed=2)
    rep = run_allocstress(spec, HeapConfig(heap_bytes=4 << 20))
    plan = stress_plan(4000, 2)
    n3 = sum(1 for ci, _, _ in plan if ci < 3)
    assert rep.counters["tracked3_tracked_allocations_per_rep"] == n3
    assert rep.counters["tracked1_tracked_allocations_per_rep"] == sum(1 for ci, _, _ in plan if ci == 0)
    assert rep.counters["tracked0_tracked_allocations_per_rep"] == 0
    assert rep.counters["base_tracked_allocations_per_rep"] == 0
    for name in ("tracked0", "tracked1", "tracked3"):
        assert rep.value(f"{name}_overhead_ci_lo") <= rep.value(f"{name}_overhead_ci_hi")
        assert rep.value(f"{name}_median_s") > 0
    assert rep.gc["base"]["containers_created"] == 0


def test_allocstress_queue_sees_every_tracked_allocation():
    from gangheap.bench import _AllocStress, stress_config
    plan = stress_plan(3000, 1)
    run = _AllocStress(stress_config(HeapConfig(heap_bytes=8 << 20), 3), plan)
    run.run_once()
    st = run.heap.gc_log
    queued = len(run.heap.queue) + sum(s.queue_drained + s.queue_dropped for s in st)
    assert queued == sum(1 for ci, _, _ in plan if ci < 3)
