import random

import pytest

from gangheap import BdaConfig, Heap, HeapConfig
from gangheap.kv import HASHMAP, HashMap, KvClasses, KvModel, SortedMap


def kv_heap(mode="bda", heap_bytes=1 << 20):
    cfg = HeapConfig(heap_bytes=heap_bytes, young_fraction=0.25, mode=mode,
                     bda=BdaConfig(classes=(HASHMAP,), container_size=64))
    heap = Heap(cfg, debug=True)
    return heap, KvClasses.register(heap)


@pytest.mark.parametrize("mode", ["base", "bda"])
def test_hashmap_matches_dict_under_collections(mode):
    heap, cls = kv_heap(mode, heap_bytes=256 << 10)
    rng = random.Random(4)
    m = HashMap(heap, cls, 4)
    ref = {}
    for _ in range(3000):
        k = rng.randrange(500)
        v = rng.getrandbits(64)
        m.put_long(k, v)
        ref[k] = v
    assert heap.gc_log
    assert len(m) == len(ref)
    assert dict(m.items_long()) == ref
    for k in range(520):
        assert m.get_long(k) == ref.get(k)
        assert (k in m) == (k in ref)


def test_hashmap_strings_and_add_long():
    heap, cls = kv_heap()
    m = HashMap(heap, cls, 8)
    m.put_string(7, b"abcdef")
    assert m.get_string(7) == b"abcdef" + bytes(10)
    m.add_long(1, 5)
    m.add_long(1, 7)
    m.add_long(2, -1)
    assert m.get_long(1) == 12
    assert m.get_long(2) == (1 << 64) - 1
    assert m.get(99) is None


def test_sortedmap_keeps_key_order():
    heap, cls = kv_heap()
    rng = random.Random(9)
    sm = SortedMap(heap, cls, 1)
    ref = {}
    for _ in range(400):
        k = rng.randrange(200)
        sm.put_long(k, k * 3)
        ref[k] = k * 3
    keys = [k for k, _ in sm.items()]
    assert keys == sorted(ref)
    assert dict(sm.items_long()) == ref
    assert sm.get_long(1000) is None


def test_kv_model_three_levels():
    heap, cls = kv_heap(heap_bytes=512 << 10)
    kv = KvModel(heap, cls, rows_hint=4)
    rng = random.Random(1)
    ref = {}
    for _ in range(2000):
        t = rng.choice(["users", "orders"])
        row, f, v = rng.randrange(40), rng.randrange(30), rng.getrandbits(32)
        kv.put(t, row, f, v)
        ref[(t, row, f)] = v
    assert heap.gc_log
    for (t, row, f), v in ref.items():
        assert kv.get(t, row, f) == v
    assert kv.get("users", 999, 0) is None
    assert kv.get("users", 0, 999) is None
    assert sorted(kv.tables()) == ["orders", "users"]
    rows = dict(kv.rows("users"))
    assert set(rows) == {row for t, row, _ in ref if t == "users"}


def test_maps_are_bda_parents():
    heap, cls = kv_heap()
    assert cls.hashmap.is_bda_class
    assert not cls.sortedmap.is_bda_class
    m = HashMap(heap, cls, 8)
    for k in range(8):
        m.put_long(k, k)
    heap.minor_collect()
    loc = heap.geometry.locate(m.ref)
    assert loc.kind == "bda"
    assert heap.geometry.containers[loc.container_id].parent == m.ref
