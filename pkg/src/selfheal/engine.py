"""Discrete-event core: integer virtual clock, ordered event queue, seeded RNG streams.

Virtual time is kept as an integer count of microseconds. Public methods accept
and report seconds; conversion happens at the boundary only.

Random numbers come from PCG32 (XSH-RR variant, O'Neill 2014), one generator per
named stream:

    state' = state * 6364136223846793005 + inc          (mod 2**64)
    out    = rotr32(((state >> 18) ^ state) >> 27, state >> 59)

A stream named ``name`` under experiment seed ``seed`` is initialised with
``initseq = fnv1a64(name)`` and ``initstate = splitmix64(seed ^ initseq)``
following the reference ``pcg32_srandom_r`` procedure.  ``uniform01`` combines
two outputs into a 53-bit float in [0, 1); ``normal`` uses the cosine branch of
Box-Muller; ``exp`` uses inversion.
"""
from __future__ import annotations

import hashlib
import heapq
import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

US_PER_S = 1_000_000
_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_PCG_MULT = 6364136223846793005


class SimulationError(RuntimeError):
    """Raised when an event handler fails; carries the offending event."""

    def __init__(self, message: str, event: "SimEvent | None" = None):
        super().__init__(message)
        self.event = event


class EventKind(str, Enum):
    REQUEST_ARRIVAL = "request-arrival"
    REQUEST_COMPLETE = "request-complete"
    TELEMETRY_TICK = "telemetry-tick"
    FAULT_INJECT = "fault-inject"
    FAULT_CLEAR = "fault-clear"
    MAPE_TICK = "mape-tick"
    ACTION_COMPLETE = "action-complete"


def to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


@dataclass(slots=True)
class SimEvent:
    fire_time_us: int
    seq: int
    kind: str
    payload: Any = None

    @property
    def fire_time(self) -> float:
        return self.fire_time_us / US_PER_S


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & _MASK64
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """A named PCG32 generator. Equal (seed, name) pairs give equal sequences."""

    __slots__ = ("name", "_state", "_inc")

    def __init__(self, name: str, seed: int):
        self.name = name
        initseq = fnv1a64(name)
        initstate = splitmix64((seed & _MASK64) ^ initseq)
        self._inc = ((initseq << 1) | 1) & _MASK64
        self._state = 0
        self.next_u32()
        self._state = (self._state + initstate) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self._state
        self._state = (old * _PCG_MULT + self._inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def uniform01(self) -> float:
        # two inlined next_u32 steps; this is the simulator's hottest path
        inc = self._inc
        old = self._state
        mid = (old * _PCG_MULT + inc) & _MASK64
        self._state = (mid * _PCG_MULT + inc) & _MASK64
        xs = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        a = (((xs >> rot) | (xs << ((-rot) & 31))) & _MASK32) >> 5
        xs = (((mid >> 18) ^ mid) >> 27) & _MASK32
        rot = mid >> 59
        b = (((xs >> rot) | (xs << ((-rot) & 31))) & _MASK32) >> 6
        return (a * 67108864 + b) / 9007199254740992.0

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform01()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        if not sigma > 0:
            raise ValueError(f"normal requires sigma > 0, got {sigma}")
        u1 = 1.0 - self.uniform01()
        u2 = self.uniform01()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def bernoulli(self, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli requires 0 <= p <= 1, got {p}")
        return self.uniform01() < p

    def exp(self, lam: float) -> float:
        if not lam > 0:
            raise ValueError(f"exp requires lambda > 0, got {lam}")
        return -math.log(1.0 - self.uniform01()) / lam

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise ValueError("randbelow requires n >= 1")
        return min(int(self.uniform01() * n), n - 1)

    def choice_weighted(self, weights: list[float]) -> int:
        total = sum(weights)
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        u = self.uniform01() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1


STREAM_NAMES = ("workload", "faults", "actions", "detectors")


class Simulation:
    """Single-threaded event loop ordered by (fire_time, seq)."""

    def __init__(self, seed: int, streams: tuple[str, ...] = STREAM_NAMES, trace: bool = True):
        self.seed = seed
        self.clock_us = 0
        self._queue: list[tuple[int, int, str, Any]] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[SimEvent], None]] = {}
        self._streams = {name: RngStream(name, seed) for name in streams}
        self._digest = hashlib.blake2b(digest_size=16) if trace else None
        self.events_fired = 0

    @property
    def clock(self) -> float:
        return self.clock_us / US_PER_S

    def on(self, kind: str, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[kind] = handler

    def register_stream(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(name, self.seed)
        return self._streams[name]

    def stream(self, name: str) -> RngStream:
        try:
            return self._streams[name]
        except KeyError:
            raise KeyError(f"unknown rng stream {name!r}") from None

    def rng_draw(self, stream: str, dist: str, *params: float) -> float | bool:
        rng = self.stream(stream)
        if dist == "uniform01":
            return rng.uniform01()
        if dist == "normal":
            return rng.normal(*params)
        if dist == "bernoulli":
            return rng.bernoulli(*params)
        if dist == "exp":
            return rng.exp(*params)
        raise ValueError(f"unknown distribution {dist!r}")

    def schedule(self, kind: str, payload: Any, fire_time: float) -> int:
        return self.schedule_us(kind, payload, to_us(fire_time))

    def schedule_us(self, kind: str, payload: Any, fire_time_us: int) -> int:
        if fire_time_us < self.clock_us:
            raise ValueError(
                f"cannot schedule {kind} at t={to_s(fire_time_us)}s before clock {self.clock}s"
            )
        self._seq += 1
        heapq.heappush(self._queue, (fire_time_us, self._seq, kind, payload))
        return self._seq

    def schedule_in(self, kind: str, payload: Any, delay: float) -> int:
        return self.schedule_us(kind, payload, self.clock_us + to_us(delay))

    def run_until(self, t_end: float) -> dict:
        end_us = to_us(t_end)
        if end_us < self.clock_us:
            raise ValueError(f"run_until({t_end}) is before the clock ({self.clock})")
        fired = 0
        queue = self._queue
        handlers = self._handlers
        digest = self._digest
        pack = struct.pack
        pop = heapq.heappop
        while queue and queue[0][0] <= end_us:
            t_us, seq, kind, payload = pop(queue)
            self.clock_us = t_us
            if digest is not None:
                digest.update(pack("<qq", t_us, seq))
                digest.update(kind.encode())
            handler = handlers.get(kind)
            if handler is not None:
                ev = SimEvent(t_us, seq, kind, payload)
                try:
                    handler(ev)
                except SimulationError:
                    raise
                except Exception as exc:
                    raise SimulationError(
                        f"handler for {ev.kind} failed at t={ev.fire_time}s (seq {ev.seq}): {exc}",
                        ev,
                    ) from exc
            fired += 1
        self.clock_us = end_us
        self.events_fired += fired
        return {"events_fired": fired, "clock": self.clock}

    def pending(self) -> int:
        return len(self._queue)

    def trace_digest(self) -> str:
        if self._digest is None:
            raise RuntimeError("tracing disabled for this simulation")
        return self._digest.hexdigest()
