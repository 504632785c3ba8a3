"""Managed object model: class registry, header encoding, reference queue.

Header layout (two 64-bit words)::

    word 0   bits  0-19  class id (0 = filler)
             bits 20-23  age
             bit  24     mark
             bits 32-63  reference-field count (for fillers: size in bytes)
    word 1   forwarding address, 0 when not forwarded

Reference fields follow the header; the opaque scalar payload follows them.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

from gangheap.config import ALIGN, FIELD_BYTES, HEADER_BYTES, align_up

CID_MASK = 0xFFFFF
AGE_SHIFT = 20
AGE_MASK = 0xF
MARK_BIT = 1 << 24
NREF_SHIFT = 32
FILLER_CID = 0
MAX_AGE = AGE_MASK


def object_size(ref_fields: int, scalar_bytes: int) -> int:
    return align_up(HEADER_BYTES + ref_fields * FIELD_BYTES + scalar_bytes, ALIGN)


@dataclass(frozen=True)
class ClassDescriptor:
    class_id: int
    name: str
    ref_field_count: int
    scalar_bytes: int
    is_bda_class: bool = False
    target_bda_space: Optional[int] = None
    # Arrays take their reference-field count at allocation time.
    is_array: bool = False

    @cached_property
    def base_size(self) -> int:
        """Size without reference fields: header plus aligned payload."""
        return HEADER_BYTES + align_up(self.scalar_bytes, ALIGN)

    def size(self, length: Optional[int] = None) -> int:
        n = self.ref_field_count if length is None else length
        return self.base_size + n * FIELD_BYTES


class ClassRegistry:
    """Class ids start at 1; id 0 is reserved for heap fillers."""

    def __init__(self, bda_classes=()):
        self._bda = {name: i for i, name in enumerate(bda_classes)}
        self._by_name: dict[str, ClassDescriptor] = {}
        self.classes: list[Optional[ClassDescriptor]] = [None]
        # Parallel arrays read on hot paths.
        self.base_size: list[int] = [0]
        self.bda_space: list[int] = [-1]
        self.frozen = False
        self._lock = threading.Lock()

    def register(self, name: str, ref_field_count: int = 0, scalar_bytes: int = 0,
                 is_array: bool = False) -> ClassDescriptor:
        if ref_field_count < 0 or scalar_bytes < 0:
            raise ValueError("field counts must be >= 0")
        with self._lock:
            if self.frozen:
                raise ValueError("class registry is frozen")
            if name in self._by_name:
                raise ValueError(f"class {name!r} already registered")
            cid = len(self.classes)
            if cid > CID_MASK:
                raise ValueError("class id space exhausted")
            space = self._bda.get(name)
            desc = ClassDescriptor(cid, name, ref_field_count, scalar_bytes,
                                   is_bda_class=space is not None, target_bda_space=space,
                                   is_array=is_array)
            self._by_name[name] = desc
            self.classes.append(desc)
            self.base_size.append(desc.base_size)
            self.bda_space.append(-1 if space is None else space)
            return desc

    def freeze(self):
        self.frozen = True

    def __getitem__(self, cid: int) -> ClassDescriptor:
        if not 0 < cid < len(self.classes):
            raise KeyError(f"unregistered class id {cid}")
        return self.classes[cid]

    def by_name(self, name: str) -> ClassDescriptor:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self):
        return len(self.classes) - 1

    def __iter__(self):
        return iter(self.classes[1:])


class ReferenceQueueEntry(NamedTuple):
    root: int
    target_space: int


class ReferenceQueue:
    """Addresses of young bda-class instances awaiting gang promotion.

    Only the address is stored on the allocation path; the target space is
    recovered from the object's class when the queue is drained.
    """

    def __init__(self, registry: ClassRegistry):
        self._registry = registry
        self.roots: list[int] = []

    def __len__(self):
        return len(self.roots)

    def entries(self, words) -> list[ReferenceQueueEntry]:
        out = []
        spaces = self._registry.bda_space
        for a in self.roots:
            out.append(ReferenceQueueEntry(a, spaces[words[a >> 3] & CID_MASK]))
        return out

    def take(self) -> list[int]:
        # The list object stays put: the allocator holds its bound append.
        roots = self.roots[:]
        self.roots.clear()
        return roots
