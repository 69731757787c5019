"""Deterministic discrete-event core: virtual clock, event queue, seeded streams.

Time is counted in abstract integer units. One unit corresponds to 50 ms of
wall-clock delay: the worst-case regional round trip (500 ms) divided by the
largest per-hop delay value (10). Every source of randomness is a named
stream derived from a single master seed, so any run can be replayed bit for
bit.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

MS_PER_UNIT = 50
HOP_DELAY_MIN = 1
HOP_DELAY_MAX = 10
DEFAULT_SEED = 7919

# Event kind discriminants used by the simulation layers.
KIND_MESSAGE = "message-delivery"
KIND_NODE_UP = "node-up"
KIND_NODE_DOWN = "node-down"
KIND_TIMER = "timer"
KIND_BEACON = "beacon"

VirtualTime = int


def units_to_ms(units: int | float) -> int | float:
    """Convert virtual time units to milliseconds (1 unit = 50 ms).

    Integer input yields an exact integer result; float input (e.g. a Monte
    Carlo mean) yields a float.
    """
    if units < 0:
        raise ValueError(f"virtual time must be non-negative, got {units!r}")
    return units * MS_PER_UNIT


def derive_seed(master_seed: int, stream_id: str) -> int:
    """Map (master seed, stream id) to a stable 64-bit child seed.

    Uses keyed blake2b so the mapping is independent of PYTHONHASHSEED and
    identical across platforms and runs.
    """
    key = (master_seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
    digest = hashlib.blake2b(stream_id.encode("utf-8"), digest_size=8, key=key)
    return int.from_bytes(digest.digest(), "big")


class RandomStream:
    """Reproducible random source identified by (seed, stream_id).

    Identical (seed, stream_id) pairs yield identical draw sequences;
    distinct stream ids derived from the same seed are independent for
    simulation purposes.
    """

    def __init__(self, seed: int = DEFAULT_SEED, stream_id: str = "root"):
        self.seed = seed
        self.stream_id = stream_id
        self._gen = np.random.Generator(np.random.PCG64(derive_seed(seed, stream_id)))

    def child(self, label: str) -> "RandomStream":
        return RandomStream(self.seed, f"{self.stream_id}/{label}")

    def integers(self, low: int, high: int, size=None):
        """Uniform integers on the inclusive range [low, high]."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def hop_delay(self) -> int:
        return int(self.integers(HOP_DELAY_MIN, HOP_DELAY_MAX))

    def hop_delays(self, size) -> np.ndarray:
        return self.integers(HOP_DELAY_MIN, HOP_DELAY_MAX, size=size)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id!r})"


def sample_hop_delay(stream: RandomStream) -> int:
    """Draw one per-hop delay, uniform on {1..10} virtual units."""
    return stream.hop_delay()


@dataclass(frozen=True)
class LatencyModel:
    """Per-hop delay model and the real-world caps that anchor the unit scale."""

    hop_low: int = HOP_DELAY_MIN
    hop_high: int = HOP_DELAY_MAX
    local_cap_ms: int = 10
    regional_cap_ms: int = 500

    def __post_init__(self):
        if not (1 <= self.hop_low <= self.hop_high):
            raise ValueError("need 1 <= hop_low <= hop_high")
        if not (0 < self.local_cap_ms <= self.regional_cap_ms):
            raise ValueError("need 0 < local_cap_ms <= regional_cap_ms")

    @property
    def ms_per_unit(self) -> float:
        # Worst-case regional delay spread across the hop value range.
        return self.regional_cap_ms / self.hop_high

    def sample_hop(self, stream: RandomStream) -> int:
        return int(stream.integers(self.hop_low, self.hop_high))


@dataclass(frozen=True)
class SimEvent:
    """A scheduled occurrence. Ordering key is (at, seq); seq breaks ties."""

    at: int
    seq: int
    kind: str
    target: Any = None
    payload: Any = None


@dataclass(frozen=True)
class EventTrace:
    entries: tuple[SimEvent, ...]
    truncated: bool = False

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


Handler = Callable[["Engine", SimEvent], None]


class Engine:
    """Single-threaded event loop over a (at, seq)-ordered queue.

    All state mutation in a simulation happens from inside event handlers,
    one event at a time; the clock never moves backwards.
    """

    def __init__(self, seed: int = DEFAULT_SEED):
        self.master_seed = seed
        self.now: int = 0
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._next_seq = 0

    def stream(self, label: str) -> RandomStream:
        return RandomStream(self.master_seed, label)

    def schedule(self, at: int, kind: str, target: Any = None, payload: Any = None) -> SimEvent:
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before current time {self.now}")
        ev = SimEvent(at=at, seq=self._next_seq, kind=kind, target=target, payload=payload)
        self._next_seq += 1
        heapq.heappush(self._heap, (ev.at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, kind: str, target: Any = None, payload: Any = None) -> SimEvent:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        return self.schedule(self.now + delay, kind, target, payload)

    def pending(self) -> int:
        return len(self._heap)

    def run(self, handler: Handler | None = None, horizon: int | None = None) -> EventTrace:
        """Process events in (at, seq) order until the queue drains.

        With a horizon, events beyond it stay queued and the trace is marked
        truncated; that is a defined outcome, not a failure.
        """
        processed: list[SimEvent] = []
        while self._heap:
            at, _seq, ev = self._heap[0]
            if horizon is not None and at > horizon:
                return EventTrace(entries=tuple(processed), truncated=True)
            heapq.heappop(self._heap)
            self.now = at
            processed.append(ev)
            if handler is not None:
                handler(self, ev)
        return EventTrace(entries=tuple(processed), truncated=False)
