import random

from gangheap.barrier import CardTable

from heaps import RandomMutator, new_heap
from oracles import dirty_cover, old_to_young_objects


def test_dirty_on_store_indexing():
    ct = CardTable(4096, 4096 + 64 * 512)
    ct.dirty_on_store(4096)
    assert ct.cards[0] == 1
    ct.dirty_on_store(4096 + 512)
    assert ct.cards[1] == 1
    ct.dirty_on_store(4096 + 513)
    assert ct.dirty_count() == 2


def test_clean_or_invalidate():
    ct = CardTable(0, 8 * 512)
    ct.dirty_on_store(600)
    ct.clean_or_invalidate(young_empty=True)
    assert ct.dirty_count() == 0
    ct.clean_or_invalidate(young_empty=False)
    assert ct.dirty_count() == ct.ncards


def test_dirty_runs_clip():
    ct = CardTable(0, 16 * 512)
    for c in (2, 3, 4, 9):
        ct.cards[c] = 1
    assert ct.dirty_runs(0, 16 * 512) == [(1024, 2560), (4608, 5120)]
    assert ct.dirty_runs(1100, 4700) == [(1100, 2560), (4608, 4700)]
    assert ct.dirty_runs(100, 100) == []


def _old_objects(heap, d, n):
    hs = [heap.handle(heap.allocate(d["Node"])) for _ in range(n)]
    while not all(heap.geometry.is_old(h.ref) for h in hs):
        heap.minor_collect()
    return hs


def test_no_dirty_cards_no_ranges():
    heap, d = new_heap()
    _old_objects(heap, d, 4)
    heap.cards.clear()
    for sp in heap.geometry.old_spaces:
        assert heap.scan_dirty_ranges(sp) == []


def test_one_dirty_card_covers_overlapping_objects():
    heap, d = new_heap()
    hs = _old_objects(heap, d, 200)
    heap.cards.clear()
    target = hs[100].ref
    heap.write_field(target, 0, heap.allocate(d["Leaf"]))
    (rng,) = heap.scan_dirty_ranges(heap.geometry.old_nonbda)
    card = (target + 16 - heap.cards.base) // 512
    lo, hi = heap.cards.base + card * 512, heap.cards.base + (card + 1) * 512
    expected = [a for a in heap.objects_in(heap.geometry.old_nonbda)
                if a < hi and a + heap.size_of(a) > lo]
    assert (rng[0], rng[1]) == (min(expected), max(a + heap.size_of(a) for a in expected))


def test_dirty_run_at_bda_top_is_clamped():
    heap, d = new_heap()
    m = heap.handle(heap.allocate(d["Map"]))
    heap.write_field(m.ref, 0, heap.allocate(d["Node"]))
    heap.minor_collect()
    sp = heap.geometry.bda_spaces[d["Map"].target_bda_space]
    assert sp.start <= m.ref < sp.top
    heap.cards.cards[:] = b"\x01" * heap.cards.ncards
    ranges = heap.scan_dirty_ranges(sp)
    assert ranges
    for lo, hi in ranges:
        assert sp.start <= lo < hi <= sp.top
    for sp2 in heap.geometry.old_spaces:
        for lo, hi in heap.scan_dirty_ranges(sp2):
            assert sp2.start <= lo < hi <= sp2.top


def test_minor_after_invalidation_finds_all_edges():
    heap, d = new_heap(seed=3)
    mut = RandomMutator(heap, d, 3)
    mut.step(400)
    heap.full_collect()
    mut.step(200)
    assert old_to_young_objects(heap) <= dirty_cover(heap)
    from oracles import canonical_graph
    before = canonical_graph(heap, mut.root_refs())
    heap.minor_collect()
    assert canonical_graph(heap, mut.root_refs()) == before


def test_card_completeness_random_mutations():
    for seed in range(5):
        heap, d = new_heap(seed=seed)
        mut = RandomMutator(heap, d, seed)
        rng = random.Random(seed)
        for _ in range(20):
            mut.step(rng.randrange(50, 150))
            assert old_to_young_objects(heap) <= dirty_cover(heap)
