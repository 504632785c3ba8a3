"""Key-value structures built from managed objects.

``HashMap`` is an open-addressing table: the map object is itself an array
whose reference fields point at ``Node`` objects (key ref, value ref), so a
map is a parent, its nodes one dereference away and the key/value leaves two
away.  ``SortedMap`` has the same shape with nodes kept in key order.  Keys
are ``Long`` boxes; values are whatever the caller stores.

Every operation reserves its allocation budget up front so a collection can
only happen before raw addresses are held; Python-side wrappers keep the map
object itself in a heap handle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

HASHMAP = "HashMap"
SORTEDMAP = "SortedMap"
NODE = "Node"
LONG = "Long"
STRING = "String"


def mix(key: int) -> int:
    x = (key * GOLDEN) & MASK64
    return x ^ (x >> 29)


@dataclass(frozen=True)
class KvClasses:
    hashmap: object
    sortedmap: object
    node: object
    long: object
    string: object

    @classmethod
    def register(cls, heap, value_bytes: int = 16) -> "KvClasses":
        reg = heap.registry
        def get(name, *args):
            return reg.by_name(name) if name in reg else heap.register_class(name, *args)
        return cls(
            hashmap=get(HASHMAP, 0, 8, True),
            sortedmap=get(SORTEDMAP, 0, 8, True),
            node=get(NODE, 2, 0),
            long=get(LONG, 0, 8),
            string=get(STRING, 0, max(8, value_bytes)),
        )


class _ManagedMap:
    kind = ""

    def __init__(self, heap, classes: KvClasses, capacity: int):
        self.heap = heap
        self.cls = classes
        desc = getattr(classes, self.kind)
        cap = self._round_capacity(capacity)
        heap.reserve(desc.size(cap))
        self.h = heap.handle(heap.allocate(desc, length=cap))

    @staticmethod
    def _round_capacity(n: int) -> int:
        return max(1, n)

    @property
    def ref(self) -> int:
        return self.h.ref

    @property
    def capacity(self) -> int:
        return self.heap.field_count(self.h.ref)

    def __len__(self):
        return self.heap.read_word(self.h.ref)

    def release(self):
        self.h.release()

    def _key_of(self, node: int) -> int:
        heap = self.heap
        return heap.read_word(heap.read_field(node, 0))

    def _budget(self, value_size: int) -> int:
        c = self.cls
        return c.node.size() + c.long.size() + value_size

    # Value helpers shared by both map kinds.
    def put_long(self, key: int, value: int):
        self._put(key, self.cls.long.size(), lambda: self._new_long(value))

    def put_string(self, key: int, data: bytes):
        self._put(key, self.cls.string.size(), lambda: self._new_string(data))

    def put_ref(self, key: int, value_handle):
        self._put(key, 0, lambda: value_handle.ref)

    def _new_long(self, v: int) -> int:
        a = self.heap.allocate(self.cls.long)
        self.heap.write_word(a, v & MASK64)
        return a

    def _new_string(self, data: bytes) -> int:
        return self.heap.allocate(self.cls.string, scalar=data)

    def get_long(self, key: int) -> Optional[int]:
        v = self.get(key)
        return None if v is None else self.heap.read_word(v)

    def get_string(self, key: int) -> Optional[bytes]:
        v = self.get(key)
        return None if v is None else self.heap.read_scalar(v)

    def items_long(self) -> list[tuple[int, int]]:
        """(key, long value) pairs, read eagerly so later allocation is safe."""
        read = self.heap.read_word
        return [(k, read(v)) for k, v in self.items()]

    def items(self) -> Iterator[tuple[int, int]]:
        """(key, value ref) pairs; refs are only valid until the next allocation."""
        heap = self.heap
        m = self.h.ref
        for i in range(heap.field_count(m)):
            n = heap.read_field(m, i)
            if n:
                yield heap.read_word(heap.read_field(n, 0)), heap.read_field(n, 1)


class HashMap(_ManagedMap):
    kind = "hashmap"
    LOAD = 0.75

    @staticmethod
    def _round_capacity(n: int) -> int:
        cap = 8
        while cap * HashMap.LOAD < n:
            cap *= 2
        return cap

    def _slot(self, m: int, key: int) -> tuple[int, int]:
        """(index, node) of ``key``'s slot: its node, or the first empty slot."""
        heap = self.heap
        cap = heap.field_count(m)
        i = mix(key) & (cap - 1)
        while True:
            n = heap.read_field(m, i)
            if not n or heap.read_word(heap.read_field(n, 0)) == key:
                return i, n
            i = (i + 1) & (cap - 1)

    def get(self, key: int) -> Optional[int]:
        _, n = self._slot(self.h.ref, key)
        return self.heap.read_field(n, 1) if n else None

    def __contains__(self, key: int) -> bool:
        return self._slot(self.h.ref, key)[1] != 0

    def add_long(self, key: int, delta: int):
        """Add ``delta`` to the long stored at ``key`` in place, inserting it if absent."""
        _, n = self._slot(self.h.ref, key)
        if n:
            heap = self.heap
            v = heap.read_field(n, 1)
            heap.write_word(v, (heap.read_word(v) + delta) & MASK64)
        else:
            self.put_long(key, delta)

    def _put(self, key: int, value_size: int, make_value):
        heap = self.heap
        count = len(self)
        grow = (count + 1) > self.capacity * self.LOAD
        extra = self.cls.hashmap.size(self.capacity * 2) if grow else 0
        heap.reserve(self._budget(value_size) + extra)
        if grow:
            self._rehash(self.capacity * 2)
        m = self.h.ref
        i, n = self._slot(m, key)
        v = make_value()
        if n:
            heap.write_field(n, 1, v)
            return
        k = self._new_long_key(key)
        node = heap.allocate(self.cls.node, (k, v))
        heap.write_field(m, i, node)
        heap.write_word(m, count + 1)

    def _new_long_key(self, key: int) -> int:
        a = self.heap.allocate(self.cls.long)
        self.heap.write_word(a, key)
        return a

    def _rehash(self, cap: int):
        # Caller has reserved the space; no collection can intervene.
        heap = self.heap
        old = self.h.ref
        new = heap.allocate(self.cls.hashmap, length=cap)
        for i in range(heap.field_count(old)):
            n = heap.read_field(old, i)
            if n:
                key = heap.read_word(heap.read_field(n, 0))
                j, _ = self._slot(new, key)
                heap.write_field(new, j, n)
        heap.write_word(new, heap.read_word(old))
        self.h.ref = new


class SortedMap(_ManagedMap):
    """Nodes in ascending key order in the first ``len`` fields."""

    kind = "sortedmap"

    def _find(self, m: int, key: int) -> tuple[int, int]:
        heap = self.heap
        lo, hi = 0, heap.read_word(m)
        while lo < hi:
            mid = (lo + hi) // 2
            k = heap.read_word(heap.read_field(heap.read_field(m, mid), 0))
            if k < key:
                lo = mid + 1
            elif k > key:
                hi = mid
            else:
                return mid, heap.read_field(m, mid)
        return lo, 0

    def get(self, key: int) -> Optional[int]:
        _, n = self._find(self.h.ref, key)
        return self.heap.read_field(n, 1) if n else None

    def __contains__(self, key: int) -> bool:
        return self._find(self.h.ref, key)[1] != 0

    def _put(self, key: int, value_size: int, make_value):
        heap = self.heap
        count = len(self)
        grow = count + 1 > self.capacity
        newcap = max(4, self.capacity * 2)
        extra = self.cls.sortedmap.size(newcap) if grow else 0
        heap.reserve(self._budget(value_size) + extra)
        if grow:
            old = self.h.ref
            new = heap.allocate(self.cls.sortedmap, length=newcap)
            for i in range(count):
                heap.write_field(new, i, heap.read_field(old, i))
            heap.write_word(new, count)
            self.h.ref = new
        m = self.h.ref
        pos, n = self._find(m, key)
        v = make_value()
        if n:
            heap.write_field(n, 1, v)
            return
        k = heap.allocate(self.cls.long)
        heap.write_word(k, key)
        node = heap.allocate(self.cls.node, (k, v))
        for i in range(count, pos, -1):
            heap.write_field(m, i, heap.read_field(m, i - 1))
        heap.write_field(m, pos, node)
        heap.write_word(m, count + 1)

    def items(self):
        heap = self.heap
        m = self.h.ref
        for i in range(heap.read_word(m)):
            n = heap.read_field(m, i)
            yield heap.read_word(heap.read_field(n, 0)), heap.read_field(n, 1)


class KvModel:
    """table -> (row key -> sorted (field key -> data)), all managed.

    Tables are named on the Python side only to pick a numeric table id; the
    table directory itself is a managed ``HashMap`` of id -> row map.
    """

    def __init__(self, heap, classes: KvClasses, rows_hint: int = 16):
        self.heap = heap
        self.cls = classes
        self.rows_hint = rows_hint
        self.directory = HashMap(heap, classes, 8)
        self._ids: dict[str, int] = {}
        # Wrappers for row maps, keyed by (table id, row key); they hold handles.
        self._tables: dict[int, HashMap] = {}
        self._rows: dict[tuple, SortedMap] = {}

    def table(self, name: str) -> HashMap:
        tid = self._ids.get(name)
        if tid is None:
            tid = self._ids[name] = len(self._ids) + 1
            t = HashMap(self.heap, self.cls, self.rows_hint)
            self.directory.put_ref(tid, t.h)
            self._tables[tid] = t
        return self._tables[tid]

    def _row(self, name: str, row: int, create: bool) -> Optional[SortedMap]:
        t = self.table(name)
        key = (self._ids[name], row)
        sm = self._rows.get(key)
        if sm is None and create:
            sm = SortedMap(self.heap, self.cls, 4)
            t.put_ref(row, sm.h)
            self._rows[key] = sm
        return sm

    def put(self, table: str, row: int, field_key: int, value: int):
        sm = self._row(table, row, True)
        before = sm.ref
        sm.put_long(field_key, value)
        if sm.ref != before:
            self.table(table).put_ref(row, sm.h)

    def get(self, table: str, row: int, field_key: int) -> Optional[int]:
        t = self.table(table)
        r = t.get(row)
        if r is None:
            return None
        heap = self.heap
        # Walk the managed row map directly rather than through the wrapper.
        lo, hi = 0, heap.read_word(r)
        while lo < hi:
            mid = (lo + hi) // 2
            n = heap.read_field(r, mid)
            k = heap.read_word(heap.read_field(n, 0))
            if k < field_key:
                lo = mid + 1
            elif k > field_key:
                hi = mid
            else:
                return heap.read_word(heap.read_field(n, 1))
        return None

    def rows(self, table: str) -> Iterator[tuple[int, SortedMap]]:
        tid = self._ids[table]
        for (t, row), sm in sorted(self._rows.items()):
            if t == tid:
                yield row, sm

    def tables(self) -> list[str]:
        return list(self._ids)

