"""GC worker gang: per-worker work-stealing deques and a deterministic driver.

Workers are stepped in rounds on the calling thread.  Each step a worker
pops from the bottom of its own deque or, when empty, steals from the top of
a victim chosen by a seeded generator.  The interleaving therefore depends
only on the seed, which keeps placements (and everything measured from them)
reproducible, while still spreading one subgraph over several workers'
buffers the way racing parallel copiers do.
"""

from __future__ import annotations

import random
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Optional


class WorkStealingDeque:
    """Owner pushes/pops at the bottom, thieves take from the top."""

    def __init__(self):
        self._items: deque = deque()
        self._lock = threading.Lock()

    def push(self, item):
        self._items.append(item)

    def pop(self):
        try:
            return self._items.pop()
        except IndexError:
            return None

    def steal(self):
        with self._lock:
            try:
                return self._items.popleft()
            except IndexError:
                return None

    def __len__(self):
        return len(self._items)


@dataclass
class PromotionBuffer:
    """Worker-private bump chunk in to-space or the old generation."""

    top: int = 0
    end: int = 0

    @property
    def free(self) -> int:
        return self.end - self.top


class Worker:
    def __init__(self, wid: int):
        self.wid = wid
        self.queue = WorkStealingDeque()
        self.to_plab = PromotionBuffer()
        self.old_plab = PromotionBuffer()
        self.steps = 0
        self.steals = 0


class WorkerGang:
    def __init__(self, n: int, seed: int = 0):
        self.workers = [Worker(i) for i in range(n)]
        self.rng = random.Random(seed)

    def __len__(self):
        return len(self.workers)

    def __iter__(self):
        return iter(self.workers)

    def reseed(self, seed: int):
        self.rng.seed(seed)

    def distribute(self, items):
        """Deal initial tasks round-robin."""
        ws = self.workers
        n = len(ws)
        for i, item in enumerate(items):
            ws[i % n].queue.push(item)

    def _take(self, w: Worker) -> Optional[Any]:
        item = w.queue.pop()
        if item is not None or len(self.workers) == 1:
            return item
        n = len(self.workers)
        start = self.rng.randrange(n)
        for k in range(n):
            v = self.workers[(start + k) % n]
            if v is w:
                continue
            item = v.queue.steal()
            if item is not None:
                w.steals += 1
                return item
        return None

    def run(self, process: Callable[[Worker, Any], None]):
        """Step workers round-robin until every deque is empty."""
        ws = self.workers
        if len(ws) == 1:
            w = ws[0]
            q = w.queue
            while True:
                item = q.pop()
                if item is None:
                    return
                w.steps += 1
                process(w, item)
        while True:
            progressed = False
            for w in ws:
                item = self._take(w)
                if item is not None:
                    progressed = True
                    w.steps += 1
                    process(w, item)
            if not progressed:
                return

    def claim_each(self, items, process: Callable[[Worker, Any], None]):
        """Hand out items one at a time to workers in turn; no splitting."""
        ws = self.workers
        for i, item in enumerate(items):
            w = ws[i % len(ws)]
            w.steps += 1
            process(w, item)
