import logging
import random

import pytest

from gangheap.errors import SnapshotParseError
from gangheap.locality import (
    HeapSnapshot, ObjectRecord, PageCacheModel, color_subgraphs, objects_per_page, read_snapshot,
    reference_distance, simulate_page_faults, snapshot_metrics, take_snapshot, write_snapshot,
)

from heaps import RandomMutator, new_heap
from oracles import bfs_reachable, lru_faults, ordered_bfs_colors, random_trace


def rec(addr, refs=(), size=32, color=None):
    return ObjectRecord(addr, size, 1, tuple(refs), color)


def colors(snap):
    return {r.address: r.color for r in snap.records}


def test_disjoint_trees_distinct_colors():
    snap = HeapSnapshot([rec(0x100, (0x120, 0x140)), rec(0x120), rec(0x140),
                         rec(0x200, (0x220,)), rec(0x220), rec(0x300)])
    c = colors(color_subgraphs(snap, [0x100, 0x200]))
    assert c == {0x100: 0, 0x120: 0, 0x140: 0, 0x200: 1, 0x220: 1, 0x300: None}


def test_shared_child_takes_first_root():
    snap = HeapSnapshot([rec(0x100, (0x300,)), rec(0x200, (0x300,)), rec(0x300)])
    assert colors(color_subgraphs(snap, [0x100, 0x200]))[0x300] == 0
    assert colors(color_subgraphs(snap, [0x200, 0x100]))[0x300] == 0
    assert colors(color_subgraphs(snap, [0x200, 0x100]))[0x100] == 1


def test_unknown_root_rejected():
    with pytest.raises(KeyError):
        color_subgraphs(HeapSnapshot([rec(0x100)]), [0x108])


def random_snapshot(seed, n=300):
    rng = random.Random(seed)
    addrs = [0x1000 + 48 * i for i in range(n)]
    recs = [rec(a, [rng.choice(addrs) if rng.random() < 0.8 else 0 for _ in range(rng.randrange(4))])
            for a in addrs]
    roots = rng.sample(addrs, 10)
    return HeapSnapshot(recs), roots


def test_coloring_matches_ordered_bfs():
    for seed in range(20):
        snap, roots = random_snapshot(seed)
        expect = ordered_bfs_colors(snap.records, roots)
        got = colors(color_subgraphs(snap, roots))
        assert {a: c for a, c in got.items() if c is not None} == expect


def test_take_snapshot_colored_equals_color_subgraphs():
    for seed in range(5):
        heap, d = new_heap(seed=seed)
        mut = RandomMutator(heap, d, seed)
        mut.step(400)
        heap.minor_collect()
        live = list(dict.fromkeys(r for r in heap.root_refs() if r))
        plain = take_snapshot(heap, live)
        assert all(r.color is None for r in plain.records)
        assert take_snapshot(heap, live, color=True).records == color_subgraphs(plain, live).records


def test_snapshot_count_equals_reachable():
    for seed in range(5):
        heap, d = new_heap(seed=seed)
        mut = RandomMutator(heap, d, seed)
        mut.step(500)
        heap.full_collect()
        snap = take_snapshot(heap)
        assert {r.address for r in snap.records} == bfs_reachable(heap, heap.root_refs())
        snap.validate()


def test_objects_per_page_packed():
    recs = [rec(0x10000 + 64 * i, size=64, color=3) for i in range(128)]
    assert objects_per_page(HeapSnapshot(recs)) == 64.0


def test_objects_per_page_one_per_page():
    recs = [rec(0x10000 + 4096 * i, color=i % 3) for i in range(10)]
    assert objects_per_page(HeapSnapshot(recs)) == 1.0


def test_objects_per_page_empty_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="gangheap.locality"):
        assert objects_per_page(HeapSnapshot()) == 0
    assert "no coloured objects" in caplog.text


def test_straddling_object_counted_on_start_page():
    recs = [rec(4096 - 16, size=64, color=0), rec(4096 + 48, color=0)]
    assert objects_per_page(HeapSnapshot(recs)) == 1.0


def test_snapshot_metrics_agree_with_separate_functions():
    snap, roots = random_snapshot(3)
    cs = color_subgraphs(snap, roots)
    m = snapshot_metrics(cs)
    assert m["objects_per_page"] == objects_per_page(cs)
    assert m["reference_distance"] == pytest.approx(reference_distance(cs))
    assert m["objects"] == len(cs)


@pytest.mark.parametrize("trace,cap,faults", [
    ([0, 0, 0], 1, 1),
    ([0, 4096, 0, 4096], 1, 4),
    ([0, 4096, 0, 4096], 2, 2),
    ([0, 0, 0], 0, 3),
    ([], 4, 0),
])
def test_lru_small_traces(trace, cap, faults):
    assert simulate_page_faults(trace, cap) == faults


def test_lru_resident_bounded():
    m = PageCacheModel(3)
    for a in random_trace(1):
        m.access(a)
        assert m.resident <= 3
    with pytest.raises(ValueError):
        PageCacheModel(-1)


def test_lru_matches_list_oracle():
    for seed in range(50):
        trace = random_trace(seed)
        cap = seed % 12
        assert simulate_page_faults(trace, cap) == lru_faults(trace, cap)


def test_snapshot_round_trip(tmp_path):
    heap, d = new_heap(seed=8)
    mut = RandomMutator(heap, d, 8)
    mut.step(400)
    heap.minor_collect()
    snap = take_snapshot(heap, seq=3, label="after minor", color=True)
    p = tmp_path / "s.snap"
    write_snapshot(snap, p)
    back = read_snapshot(p)
    assert back == snap
    assert back.records == snap.records


def test_empty_snapshot_is_header_only(tmp_path):
    heap, _ = new_heap()
    snap = take_snapshot(heap)
    assert len(snap) == 0
    p = tmp_path / "e.snap"
    write_snapshot(snap, p)
    assert p.read_text().splitlines() == ["gangheap-snapshot 1", "seq,0", "label,"]
    assert read_snapshot(p) == snap


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.snap"
    p.write_text("gangheap-snapshot 1\nseq,0\n10,32,1,-,\n20,32,zz,-,\n")
    with pytest.raises(SnapshotParseError) as e:
        read_snapshot(p)
    assert e.value.lineno == 4
    p.write_text("gangheap-snapshot 1\n10,32\n")
    with pytest.raises(SnapshotParseError) as e:
        read_snapshot(p)
    assert e.value.lineno == 2
    p.write_text("something else\n")
    with pytest.raises(SnapshotParseError) as e:
        read_snapshot(p)
    assert e.value.lineno == 1
