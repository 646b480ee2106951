"""Simulated clock, event queue and the splitmix64 random stream.

All times are integer microseconds. Events fire in ``(fire_at, seq)`` order,
where ``seq`` is the insertion counter, so a run never depends on wall-clock
time or dict ordering.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

US = 1
MS = 1_000
SECOND = 1_000_000

SimTime = int


class SchedulingInPast(ValueError):
    """Raised when an event is scheduled before the current clock."""


class UnknownTarget(KeyError):
    pass


# --------------------------------------------------------------------------
# splitmix64


def mix64(z: int) -> int:
    """splitmix64 output finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def rng_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state.

    Returns:
        ``(value, new_state)``; both are 64-bit unsigned integers.
    """
    state = (state + GOLDEN_GAMMA) & MASK64
    return mix64(state), state


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, name: str) -> int:
    """Seed of the substream called ``name`` under a scenario seed."""
    return mix64((seed & MASK64) ^ fnv1a64(name))


class SplitMix64:
    """Stateful wrapper around :func:`rng_next` with the draws the simulator needs."""

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    @classmethod
    def substream(cls, seed: int, name: str) -> "SplitMix64":
        return cls(derive_seed(seed, name))

    def next_u64(self) -> int:
        value, self.state = rng_next(self.state)
        return value

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        # rejection keeps the draw exactly uniform
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.randbelow(hi - lo + 1)

    def gauss(self, mu: float, sigma: float) -> float:
        # Box-Muller, one variate per two draws; no cached spare so the
        # stream position depends only on the number of calls.
        u1 = 1.0 - self.random()
        u2 = self.random()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mu + sigma * z

    def bernoulli(self, p: float) -> bool:
        return self.random() < p


# --------------------------------------------------------------------------
# event queue


@dataclass(frozen=True)
class EventRecord:
    fire_at: SimTime
    seq: int
    target: str
    payload: Any = None

    def trace_line(self) -> str:
        return f"{self.fire_at} {self.seq} {self.target} {self.payload!r}"


@dataclass
class EventHandle:
    record: EventRecord
    cancelled: bool = False


Handler = Callable[[EventRecord], None]


@dataclass
class Simulator:
    """Single-threaded discrete-event scheduler.

    Handlers are registered per target name; ``schedule`` enqueues a payload
    for a target. An optional ``horizon`` caps the clock.
    """

    now: SimTime = 0
    horizon: SimTime | None = None
    keep_trace: bool = False
    trace: list[str] = field(default_factory=list)
    _queue: list = field(default_factory=list, repr=False)
    _seq: int = 0
    _handlers: dict[str, Handler] = field(default_factory=dict, repr=False)
    _stopped: bool = False

    def register(self, target: str, handler: Handler) -> None:
        self._handlers[target] = handler

    def schedule(self, fire_at: SimTime, target: str, payload: Any = None) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at={fire_at} < clock={self.now}")
        self._seq += 1
        rec = EventRecord(int(fire_at), self._seq, target, payload)
        handle = EventHandle(rec)
        heapq.heappush(self._queue, (rec.fire_at, rec.seq, handle))
        return handle

    def after(self, delay: SimTime, target: str, payload: Any = None) -> EventHandle:
        return self.schedule(self.now + delay, target, payload)

    @staticmethod
    def cancel(handle: EventHandle | None) -> None:
        if handle is not None:
            handle.cancelled = True

    def stop(self) -> None:
        """Make the current ``run``/``run_until`` return after this event."""
        self._stopped = True

    def pending(self) -> int:
        return sum(1 for _, _, h in self._queue if not h.cancelled)

    def _dispatch(self, rec: EventRecord) -> None:
        try:
            handler = self._handlers[rec.target]
        except KeyError:
            raise UnknownTarget(rec.target) from None
        if self.keep_trace:
            self.trace.append(rec.trace_line())
        handler(rec)

    def run_until(self, t: SimTime) -> list[EventRecord]:
        """Process every event with ``fire_at <= t``; the clock ends at ``t``."""
        if self.horizon is not None:
            t = min(t, self.horizon)
        if t < self.now:
            raise SchedulingInPast(f"t={t} < clock={self.now}")
        processed = []
        self._stopped = False
        q = self._queue
        while q and q[0][0] <= t:
            fire_at, _, handle = heapq.heappop(q)
            if handle.cancelled:
                continue
            self.now = fire_at
            self._dispatch(handle.record)
            processed.append(handle.record)
            if self._stopped:
                return processed
        self.now = t
        return processed

    def run(self, limit: SimTime | None = None) -> int:
        """Run until the queue drains, ``stop()`` is called, or ``limit`` passes.

        Unlike :meth:`run_until` the clock stays at the last processed event.
        Returns the number of events processed.
        """
        if limit is None:
            limit = self.horizon
        count = 0
        self._stopped = False
        q = self._queue
        while q and not self._stopped:
            fire_at, _, handle = q[0]
            if limit is not None and fire_at > limit:
                break
            heapq.heappop(q)
            if handle.cancelled:
                continue
            self.now = fire_at
            self._dispatch(handle.record)
            count += 1
        return count
