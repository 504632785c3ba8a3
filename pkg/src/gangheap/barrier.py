"""Card-table write barrier over the old generation and dirty-range scanning."""

from __future__ import annotations

import re
from array import array

from gangheap.config import CARD_BYTES

CLEAN = 0
DIRTY = 1
_DIRTY_RUN = re.compile(b"\x01+")


class CardTable:
    """One byte per 512-byte card; index = (address - base) // card_size.

    ``first_obj`` is the block-offset table: for every card whose first byte
    is covered by an object, the start address of that object (-1 otherwise).
    It is maintained whenever an object is placed in the old generation.
    """

    card_size = CARD_BYTES

    def __init__(self, base: int, end: int):
        self.base = base
        self.end = end
        self.ncards = -(-(end - base) // CARD_BYTES)
        self.cards = bytearray(self.ncards)
        self.first_obj = array("q", [-1]) * self.ncards

    def card_index(self, addr: int) -> int:
        return (addr - self.base) // CARD_BYTES

    def card_start(self, index: int) -> int:
        return self.base + index * CARD_BYTES

    def dirty_on_store(self, addr: int):
        # Clean->dirty is monotonic; racing stores need no lock.
        self.cards[(addr - self.base) >> 9] = DIRTY

    def is_dirty(self, addr: int) -> bool:
        return self.cards[(addr - self.base) >> 9] == DIRTY

    def dirty_count(self) -> int:
        return self.cards.count(DIRTY)

    def clear(self):
        self.cards[:] = bytes(self.ncards)

    def clean_or_invalidate(self, young_empty: bool):
        """All clean when the young generation is empty, otherwise all dirty."""
        if young_empty:
            self.clear()
        else:
            self.cards[:] = b"\x01" * self.ncards

    def record_object(self, addr: int, size: int):
        base = self.base
        first = -(-(addr - base) // CARD_BYTES)
        last = (addr + size - 1 - base) // CARD_BYTES
        fo = self.first_obj
        for c in range(first, last + 1):
            fo[c] = addr

    def forget(self, start: int, end: int):
        lo = (start - self.base) // CARD_BYTES
        hi = -(-(end - self.base) // CARD_BYTES)
        self.first_obj[lo:hi] = array("q", [-1]) * (hi - lo)

    def reset_offsets(self):
        self.first_obj = array("q", [-1]) * self.ncards

    def dirty_runs(self, start: int, end: int) -> list[tuple[int, int]]:
        """Maximal runs of dirty cards, as address ranges clipped to [start, end)."""
        if end <= start:
            return []
        lo = (start - self.base) // CARD_BYTES
        hi = -(-(end - self.base) // CARD_BYTES)
        runs = []
        base = self.base
        for m in _DIRTY_RUN.finditer(self.cards, lo, hi):
            a = max(start, base + m.start() * CARD_BYTES)
            b = min(end, base + m.end() * CARD_BYTES)
            if a < b:
                runs.append((a, b))
        return runs
