import pytest

from gangheap import BdaConfig, Heap, HeapConfig
from gangheap.workers import WorkerGang, WorkStealingDeque

from heaps import RandomMutator, new_heap, small_config
from oracles import bfs_reachable, canonical_graph, live_bytes


def kv_heap(dl=2, mode="bda", threads=4, full_closure=False):
    cfg = HeapConfig(heap_bytes=1 << 20, gc_threads=threads, mode=mode, gang_full_closure=full_closure,
                     bda=BdaConfig(classes=("KVMap",), delegation_level=dl, container_size=50))
    heap = Heap(cfg, debug=True)
    d = {
        "map": heap.register_class("KVMap", 3),
        "node": heap.register_class("Entry", 2),
        "leaf": heap.register_class("Box", 0, 8),
    }
    return heap, d


def build_map(heap, d, n=3, tag=0):
    m = heap.handle(heap.allocate(d["map"]))
    for i in range(n):
        k = heap.allocate(d["leaf"], scalar=(tag * 100 + i).to_bytes(8, "little"))
        v = heap.allocate(d["leaf"], scalar=(tag * 100 + i + 50).to_bytes(8, "little"))
        heap.write_field(m.ref, i, heap.allocate(d["node"], (k, v)))
    return m


def members(heap, root):
    return sorted(bfs_reachable(heap, [root]))


def test_single_object_to_survivor():
    heap, d = new_heap()
    h = heap.handle(heap.allocate(d["Leaf"], scalar=b"x" * 16))
    heap.minor_collect()
    assert heap.geometry.locate(h.ref).kind == "from"
    assert heap.age_of(h.ref) == 1
    assert heap.read_scalar(h.ref) == b"x" * 16


def test_tenuring_threshold_promotes():
    heap, d = new_heap()
    h = heap.handle(heap.allocate(d["Leaf"]))
    for age in range(1, heap.config.tenuring_threshold + 1):
        heap.minor_collect()
        if age < heap.config.tenuring_threshold:
            assert heap.geometry.locate(h.ref).kind == "from"
            assert heap.age_of(h.ref) == age
    heap.minor_collect()
    assert heap.geometry.locate(h.ref).kind == "old_nonbda"


def test_random_graph_survives_minor():
    heap, d = new_heap(seed=11, heap_bytes=1 << 21)
    mut = RandomMutator(heap, d, 11)
    while len(bfs_reachable(heap, mut.root_refs())) < 1000:
        for _ in range(100):
            mut.allocate()
    roots = mut.root_refs()
    before = canonical_graph(heap, roots)
    nbytes = live_bytes(heap, roots)
    heap.minor_collect()
    roots = mut.root_refs()
    assert canonical_graph(heap, roots) == before
    assert live_bytes(heap, roots) == nbytes


def test_each_live_young_object_copied_once():
    heap, d = new_heap(seed=2)
    mut = RandomMutator(heap, d, 2)
    mut.step(300)
    young = {a for a in bfs_reachable(heap, mut.root_refs()) if heap.geometry.is_young(a)}
    st = heap.minor_collect()
    assert st.objects_copied == len(young)


def test_gang_promote_map_of_three():
    heap, d = kv_heap(dl=2)
    m = build_map(heap, d)
    heap.minor_collect()
    objs = members(heap, m.ref)
    assert len(objs) == 10
    locs = {heap.geometry.locate(a) for a in objs}
    assert len(locs) == 1
    (loc,) = locs
    assert loc.kind == "bda"
    assert heap.geometry.containers[loc.container_id].parent == m.ref


def test_gang_depth_zero_parent_only():
    heap, d = kv_heap(dl=0)
    m = build_map(heap, d)
    heap.minor_collect()
    geo = heap.geometry
    assert geo.locate(m.ref).kind == "bda"
    for a in members(heap, m.ref):
        if a != m.ref:
            assert geo.locate(a).container_id is None


def test_gang_full_closure_switch():
    heap, d = kv_heap(dl=0, full_closure=True)
    m = build_map(heap, d)
    heap.minor_collect()
    assert {heap.geometry.locate(a).container_id for a in members(heap, m.ref)} != {None}
    assert len({heap.geometry.locate(a).container_id for a in members(heap, m.ref)}) == 1


def test_gang_not_split_across_workers():
    heap, d = kv_heap(dl=2, threads=8)
    maps = [build_map(heap, d, tag=t) for t in range(6)]
    heap.minor_collect()
    geo = heap.geometry
    for m in maps:
        objs = members(heap, m.ref)
        segs = {id(geo.segment_at(a)) for a in objs}
        assert len(segs) == 1
        assert max(objs) - min(objs) < 10 * 32


def test_shared_child_stays_in_first_container():
    heap, d = kv_heap(dl=2)
    m1 = build_map(heap, d, tag=1)
    m2 = heap.handle(heap.allocate(d["map"]))
    shared = heap.read_field(m1.ref, 0)
    heap.write_field(m2.ref, 0, shared)
    heap.minor_collect()
    geo = heap.geometry
    c1 = geo.locate(m1.ref).container_id
    c2 = geo.locate(m2.ref).container_id
    assert c1 != c2 and None not in (c1, c2)
    child = heap.read_field(m2.ref, 0)
    assert child == heap.read_field(m1.ref, 0)
    assert geo.locate(child).container_id == c1
    assert heap.shared_events >= 1


def test_drain_counts():
    heap, d = kv_heap()
    st = heap.minor_collect()
    assert st.queue_drained == 0
    assert heap.geometry.containers == {}
    maps = [build_map(heap, d, tag=t) for t in range(4)]
    dead = heap.allocate(d["map"])
    assert dead
    st = heap.minor_collect()
    assert st.queue_drained == 5
    assert st.queue_dropped == 1
    assert len(heap.geometry.containers) == 4
    assert {heap.geometry.containers[heap.geometry.locate(m.ref).container_id].parent
            for m in maps} == {m.ref for m in maps}
    assert len(heap.queue) == 0


def test_base_mode_never_gang_promotes():
    heap, d = kv_heap(mode="base")
    m = build_map(heap, d)
    heap.minor_collect()
    assert heap.geometry.containers == {}
    assert heap.geometry.bda_spaces == []
    assert heap.geometry.locate(m.ref).kind == "from"


def test_extension_joins_container():
    heap, d = kv_heap(dl=2)
    m = build_map(heap, d, n=1)
    heap.minor_collect()
    k = heap.allocate(d["leaf"])
    v = heap.allocate(d["leaf"])
    heap.write_field(m.ref, 2, heap.allocate(d["node"], (k, v)))
    heap.minor_collect()
    cid = heap.geometry.locate(m.ref).container_id
    assert {heap.geometry.locate(a).container_id for a in members(heap, m.ref)} == {cid}


def test_extension_ignores_detached_holder():
    heap, d = kv_heap(dl=2)
    m = build_map(heap, d, n=1)
    heap.minor_collect()
    node = heap.handle(heap.read_field(m.ref, 0))
    heap.write_field(m.ref, 0, 0)
    heap.write_field(node.ref, 1, heap.allocate(d["leaf"]))
    heap.minor_collect()
    cid = heap.geometry.locate(m.ref).container_id
    assert heap.geometry.locate(heap.read_field(node.ref, 1)).container_id != cid


def test_degraded_container_falls_back():
    cfg = small_config(heap_bytes=256 << 10)
    heap = Heap(cfg, debug=True)
    mp = heap.register_class("Map", 4)
    leaf = heap.register_class("Leaf", 0, 16)
    heap.register_class("Tree", 3)
    maps = []
    geo = heap.geometry
    # Exhaust the bda-space and old_nonbda slack so segment allocation fails.
    geo.nonbda_reserve = 0
    while True:
        h = heap.handle(heap.allocate(mp))
        for k in range(4):
            heap.write_field(h.ref, k, heap.allocate(leaf))
        maps.append(h)
        st = heap.minor_collect()
        if st.kind == "minor" and st.degraded_containers:
            break
        assert len(maps) < 200
    before = canonical_graph(heap, [h.ref for h in maps])
    heap.full_collect()
    assert canonical_graph(heap, [h.ref for h in maps]) == before


def test_work_stealing_deque():
    q = WorkStealingDeque()
    for i in range(4):
        q.push(i)
    assert q.pop() == 3
    assert q.steal() == 0
    assert len(q) == 2
    assert WorkStealingDeque().pop() is None


def test_gang_run_processes_everything_deterministically():
    def run(seed):
        g = WorkerGang(4, seed)
        seen = []

        def process(w, item):
            seen.append((w.wid, item))
            if item < 200:
                w.queue.push(item * 2 + 1)
                w.queue.push(item * 2 + 2)

        g.distribute([0])
        g.run(process)
        return seen

    a = run(7)
    assert sorted(i for _, i in a) == list(range(401))
    assert a == run(7)
    assert len({w for w, _ in a}) > 1


def test_claim_each_one_item_per_step():
    g = WorkerGang(3)
    got = []
    g.claim_each(range(7), lambda w, it: got.append((w.wid, it)))
    assert got == [(i % 3, i) for i in range(7)]


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_minor_preserves_graph_for_any_gang_size(threads):
    heap, d = new_heap(seed=5, gc_threads=threads)
    mut = RandomMutator(heap, d, 5)
    mut.step(300)
    before = canonical_graph(heap, mut.root_refs())
    heap.minor_collect()
    heap.minor_collect()
    assert canonical_graph(heap, mut.root_refs()) == before
