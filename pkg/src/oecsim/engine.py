"""Discrete-event core: integer-microsecond clock, ordered event queue, seeded streams.

Random streams are PCG64 generators seeded through numpy's ``SeedSequence``
with ``entropy=master_seed`` and ``spawn_key`` set to the eight little-endian
32-bit words of ``sha256(label)``. The same (master_seed, label) pair therefore
gives the same sample sequence on any machine running this package.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import math
from typing import Any, NamedTuple

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000

_BLOCK = 512


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


def ms_to_us(ms: float) -> int:
    """Round a duration in milliseconds half-up to whole microseconds."""
    return math.floor(ms * US_PER_MS + 0.5)


def s_to_us(seconds: float) -> int:
    return math.floor(seconds * US_PER_S + 0.5)


class EventKind(enum.IntEnum):
    ARRIVAL = 1
    SEND_COMPLETE = 2
    SERVICE_COMPLETE = 3
    CHURN_DOWN = 4
    CHURN_UP = 5
    LEASE_EXPIRY = 6
    MONITOR_TICK = 7


class Event(NamedTuple):
    fire_at: int
    seq: int
    kind: EventKind
    target: Any = None


class EventQueue:
    """Min-heap of events keyed by ``(fire_at, seq)``.

    ``seq`` is assigned on insertion so simultaneous events pop in FIFO order.
    The heap holds plain tuples; ``pop_next`` wraps them as ``Event``.
    """

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, fire_at: int, kind: EventKind, target: Any = None) -> Event:
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind.name} at t={fire_at}us, clock is at {self.now}us"
            )
        entry = (fire_at, self._seq, kind, target)
        self._seq += 1
        heapq.heappush(self._heap, entry)
        return Event(*entry)

    def push(self, fire_at: int, kind: EventKind, target: Any = None) -> None:
        """``schedule`` without the Event wrapper, for hot loops."""
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind.name} at t={fire_at}us, clock is at {self.now}us"
            )
        heapq.heappush(self._heap, (fire_at, self._seq, kind, target))
        self._seq += 1

    def pop_raw(self) -> tuple | None:
        if not self._heap:
            return None
        entry = heapq.heappop(self._heap)
        self.now = entry[0]
        return entry

    def pop_next(self) -> Event | None:
        entry = self.pop_raw()
        return None if entry is None else Event(*entry)

    def advance_to(self, t: int) -> None:
        """Move the clock forward without an event; no pending event may be skipped."""
        if t < self.now:
            raise SchedulingError(f"clock cannot move back from {self.now}us to {t}us")
        if self._heap and self._heap[0][0] < t:
            raise SchedulingError("pending events precede the requested time")
        self.now = t

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None


def _label_key(label: str) -> tuple[int, ...]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4))


def _seed_sequence(master_seed: int, label: str) -> np.random.SeedSequence:
    if not label:
        raise ValueError("stream label must be non-empty")
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=_label_key(label))


def derive_seed(master_seed: int, label: str) -> int:
    """A 64-bit child seed, used to give each run its own master seed."""
    state = _seed_sequence(master_seed, label).generate_state(1, dtype=np.uint64)
    return int(state[0])


class RngStream:
    """Buffered sampler over one PCG64 generator.

    Draws are pulled from the generator in fixed-size blocks per distribution,
    which keeps per-sample cost low inside the event loop. The sequence depends
    only on (master_seed, label) and the order of calls.
    """

    def __init__(self, master_seed: int, label: str) -> None:
        self.master_seed = master_seed
        self.label = label
        self._gen = np.random.Generator(np.random.PCG64(_seed_sequence(master_seed, label)))
        self._normal: list[float] = []
        self._expo: list[float] = []
        self._unif: list[float] = []

    def normal(self) -> float:
        if not self._normal:
            self._normal = self._gen.standard_normal(_BLOCK).tolist()
            self._normal.reverse()
        return self._normal.pop()

    def exponential(self) -> float:
        if not self._expo:
            self._expo = self._gen.standard_exponential(_BLOCK).tolist()
            self._expo.reverse()
        return self._expo.pop()

    def uniform(self) -> float:
        if not self._unif:
            self._unif = self._gen.random(_BLOCK).tolist()
            self._unif.reverse()
        return self._unif.pop()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        return min(int(self.uniform() * n), n - 1)


def derive_stream(master_seed: int, label: str) -> RngStream:
    return RngStream(master_seed, label)
