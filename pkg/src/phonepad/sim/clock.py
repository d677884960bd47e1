"""Deterministic event scheduler driving a virtual millisecond clock.

Events fire in (time, priority, insertion) order. Frame deliveries run
at priority 0 and periodic ticks (sampling, ping) at priority 1, so a
sample taken at t sees every frame that arrived at t.
"""
from __future__ import annotations

import heapq

PRIO_DELIVER = 0
PRIO_TICK = 1


class Scheduler:
    def __init__(self):
        self.now_ms = 0.0
        self._heap: list = []
        self._seq = 0

    def at(self, t_ms: float, fn, priority: int = PRIO_DELIVER) -> None:
        if t_ms < self.now_ms:
            raise ValueError(f"cannot schedule into the past: {t_ms} < {self.now_ms}")
        heapq.heappush(self._heap, (t_ms, priority, self._seq, fn))
        self._seq += 1

    def after(self, delay_ms: float, fn, priority: int = PRIO_DELIVER) -> None:
        self.at(self.now_ms + delay_ms, fn, priority)

    def run(self, until_ms: float | None = None) -> None:
        """Execute events until the queue drains (or past until_ms)."""
        while self._heap:
            t_ms, _prio, _seq, fn = self._heap[0]
            if until_ms is not None and t_ms > until_ms:
                break
            heapq.heappop(self._heap)
            self.now_ms = t_ms
            fn()

    def pending(self) -> int:
        return len(self._heap)
