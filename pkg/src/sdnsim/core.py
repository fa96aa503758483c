"""Deterministic discrete-event core.

The simulation clock is an integer count of microseconds.  Events are
dispatched strictly in (fire_at, seq) order where seq is a global insertion
counter, so two runs that schedule the same work in the same order replay
identically.  One seeded RNG stream per engine; components must draw from it
in deterministic call order.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable, Optional

US_PER_MS = 1_000
US_PER_S = 1_000_000


def s_to_us(seconds: float) -> int:
    """Convert seconds to integer microseconds (round to nearest)."""
    return int(round(seconds * US_PER_S))


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled into the past (a programming error)."""


@dataclass(frozen=True)
class Event:
    """Record of one dispatched event, used by tracing and tests."""

    fire_at: int
    seq: int
    target: str
    payload: Any


@dataclass(frozen=True)
class RunConfig:
    seed: int
    duration_us: int

    def __post_init__(self) -> None:
        if self.duration_us <= 0:
            raise ValueError("duration_us must be > 0")


class Engine:
    """Virtual clock plus a (fire_at, seq)-ordered event queue.

    Handlers are plain callables taking one argument.  A simulation instance
    is strictly single threaded; independent instances may run in parallel
    processes.
    """

    __slots__ = ("now_us", "rng", "_heap", "_seq", "trace")

    def __init__(self, seed: int = 0):
        self.now_us: int = 0
        self.rng = random.Random(seed)
        self._heap: list = []
        self._seq: int = 0
        # When set to a list, every dispatched event is appended as an Event.
        self.trace: Optional[list] = None

    def schedule(self, at_us: int, fn: Callable[[Any], None], arg: Any = None) -> None:
        """Enqueue fn(arg) to fire at at_us.  Fires exactly once."""
        if at_us < self.now_us:
            raise SchedulingError(
                f"event scheduled into the past: at={at_us} now={self.now_us} fn={fn!r}"
            )
        heapq.heappush(self._heap, (at_us, self._seq, fn, arg))
        self._seq += 1

    def schedule_after(self, delay_us: int, fn: Callable[[Any], None], arg: Any = None) -> None:
        self.schedule(self.now_us + delay_us, fn, arg)

    def run_until(self, t_us: int) -> int:
        """Process every event with fire_at <= t_us, then set the clock to t_us.

        Returns the number of events processed.
        """
        if t_us < self.now_us:
            raise SchedulingError(f"run_until into the past: t={t_us} now={self.now_us}")
        heap = self._heap
        pop = heapq.heappop
        count = 0
        if self.trace is None:
            while heap and heap[0][0] <= t_us:
                at, _seq, fn, arg = pop(heap)
                self.now_us = at
                fn(arg)
                count += 1
        else:
            trace = self.trace
            while heap and heap[0][0] <= t_us:
                at, seq, fn, arg = pop(heap)
                self.now_us = at
                trace.append(Event(at, seq, getattr(fn, "__qualname__", repr(fn)), arg))
                fn(arg)
                count += 1
        self.now_us = t_us
        return count

    def pending(self) -> int:
        return len(self._heap)
