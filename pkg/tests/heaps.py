"""Seeded heap builders shared by the unit, property and acceptance tests."""

from __future__ import annotations

import random

from gangheap import BdaConfig, Heap, HeapConfig

# name, ref fields, scalar bytes, is_array
CLASSES = [
    ("Map", 4, 0, False),
    ("Tree", 3, 0, False),
    ("Node", 2, 0, False),
    ("Leaf", 0, 16, False),
    ("Arr", 0, 0, True),
]
BDA = ("Map", "Tree")


def small_config(seed=0, mode="bda", heap_bytes=512 << 10, gc_threads=4, **kw) -> HeapConfig:
    bda = BdaConfig(classes=BDA, bda_ratio=0.4, container_size=50)
    return HeapConfig(heap_bytes=heap_bytes, young_fraction=0.2, gc_threads=gc_threads, mode=mode,
                      seed=seed, bda=bda, **kw)


def new_heap(seed=0, mode="bda", debug=True, **kw):
    heap = Heap(small_config(seed, mode, **kw), debug=debug)
    descs = {name: heap.register_class(name, refs, scalar, arr) for name, refs, scalar, arr in CLASSES}
    return heap, descs


class RandomMutator:
    """Allocates, links and drops objects at random; all state lives in handles."""

    def __init__(self, heap, descs, seed, nroots=16):
        self.heap = heap
        self.descs = list(descs.values())
        self.rng = random.Random(seed)
        self.roots = [heap.handle(0) for _ in range(nroots)]

    def pick(self):
        live = [h.ref for h in self.roots if h.ref]
        return self.rng.choice(live) if live else 0

    def reachable_pick(self, depth=3):
        a = self.pick()
        for _ in range(self.rng.randrange(depth)):
            if not a:
                break
            refs = [v for v in self.heap.refs_of(a) if v]
            if not refs:
                break
            a = self.rng.choice(refs)
        return a

    def allocate(self):
        heap, rng = self.heap, self.rng
        d = rng.choice(self.descs)
        if d.is_array:
            a = heap.allocate(d, length=rng.randrange(0, 12))
        else:
            payload = rng.randbytes(d.scalar_bytes) if d.scalar_bytes else b""
            a = heap.allocate(d, scalar=payload)
        for k in range(heap.field_count(a)):
            if rng.random() < 0.7:
                heap.write_field(a, k, self.reachable_pick())
        if rng.random() < 0.3:
            self.roots[rng.randrange(len(self.roots))].ref = a
        else:
            holder = self.reachable_pick()
            if holder and holder != a and heap.field_count(holder):
                heap.write_field(holder, rng.randrange(heap.field_count(holder)), a)
            else:
                self.roots[rng.randrange(len(self.roots))].ref = a
        return a

    def store(self):
        a = self.reachable_pick()
        if a and self.heap.field_count(a):
            self.heap.write_field(a, self.rng.randrange(self.heap.field_count(a)), self.reachable_pick())

    def drop(self):
        self.roots[self.rng.randrange(len(self.roots))].ref = 0

    def step(self, n):
        rng = self.rng
        for _ in range(n):
            x = rng.random()
            if x < 0.55:
                self.allocate()
            elif x < 0.9:
                self.store()
            else:
                self.drop()

    def root_refs(self):
        return [h.ref for h in self.roots]


def random_heap(seed, steps=300, mode="bda", **kw):
    heap, descs = new_heap(seed, mode, **kw)
    mut = RandomMutator(heap, descs, seed)
    mut.step(steps)
    return heap, mut
