"""Three-tier web application model driven by a closed-loop user population.

Latency uses an analytic load-factor approximation instead of per-request
queueing: each tier multiplies its base latency by ``1 / (1 - min(rho, 0.95))``
where ``rho`` is last window's arrival utilisation plus the tier's CPU bias.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .engine import US_PER_S, EventKind, SimEvent, Simulation, to_us

log = logging.getLogger(__name__)

TIERS = ("frontend", "api", "db")
OP_TYPES = ("login", "upload", "query")
OP_PATHS: dict[str, tuple[str, ...]] = {
    "login": ("frontend", "api", "db"),
    "query": ("frontend", "api", "db"),
    "upload": ("frontend", "api"),
}
RHO_CAP = 0.95

# request status codes in the ledger
OK, ERROR, TIMEOUT, IN_FLIGHT = "ok", "error", "timeout", "in_flight"


class Availability(str, Enum):
    UP = "up"
    DEGRADED = "degraded"
    DOWN = "down"


def latency_multiplier(rho: float) -> float:
    return 1.0 / (1.0 - min(max(rho, 0.0), RHO_CAP))


@dataclass
class Tier:
    name: str
    service_rate: float
    concurrency_limit: int
    base_latency: float  # ms
    mem_capacity: float  # MB
    mem_baseline: float  # MB
    availability: Availability = Availability.UP
    mem_used: float = 0.0
    cpu_load_bias: float = 0.0
    error_injection_rate: float = 0.0
    deploy_version: int = 1
    cache_valid: bool = True
    # fault-effect knobs beyond the basic fields
    error_code: str = "HTTP-500"
    error_ops: frozenset[str] | None = None
    latency_factor: float = 1.0
    leak_rate: float = 0.0  # MB/s
    deadlock_ops: frozenset[str] = frozenset()
    oom_threshold: float = math.inf
    oom_crashed: bool = False
    restarting: bool = False
    # runtime state
    rho: float = 0.0
    in_flight: int = 0
    _arrivals: int = 0
    _mem_t_us: int = 0

    def __post_init__(self) -> None:
        if not self.mem_used:
            self.mem_used = self.mem_baseline
        if self.service_rate <= 0:
            raise ValueError(f"tier {self.name}: service_rate must be > 0")

    @property
    def up(self) -> bool:
        return self.availability is not Availability.DOWN

    def effective_rho(self) -> float:
        return self.rho + self.cpu_load_bias

    def memory_pressure(self) -> float:
        span = self.mem_capacity - self.mem_baseline
        return max(0.0, (self.mem_used - self.mem_baseline) / span) if span > 0 else 0.0


@dataclass
class WorkloadConfig:
    users: int = 100
    think_time: float = 2.0  # exponential mean, seconds; math.inf = single shot
    op_mix: dict[str, float] = field(
        default_factory=lambda: {"login": 0.25, "upload": 0.20, "query": 0.55}
    )
    request_timeout: float = 10.0

    def validate(self) -> None:
        if self.users < 1:
            raise ValueError("workload.users must be >= 1")
        if set(self.op_mix) - set(OP_TYPES):
            raise ValueError(f"workload.op_mix has unknown ops: {sorted(set(self.op_mix) - set(OP_TYPES))}")
        if any(p < 0 for p in self.op_mix.values()):
            raise ValueError("workload.op_mix has negative probabilities")
        if abs(sum(self.op_mix.values()) - 1.0) > 1e-9:
            raise ValueError(f"workload.op_mix must sum to 1, got {sum(self.op_mix.values())}")
        if self.request_timeout <= 0:
            raise ValueError("workload.request_timeout must be > 0")


@dataclass(slots=True)
class Request:
    id: int
    op_type: str
    arrival: float
    completion: float | None = None
    status: str = IN_FLIGHT
    code: int | None = None
    path: tuple[str, ...] = ()

    @property
    def response_time(self) -> float | None:
        if self.completion is None:
            return None
        return self.completion - self.arrival


@dataclass(slots=True)
class TelemetrySample:
    t: float
    tier: str
    cpu_util: float
    mem_used: float
    mean_rt: float | None
    p95_rt: float | None
    request_count: int
    error_count: int
    queue_len: int
    available: bool


@dataclass(slots=True)
class LogEvent:
    t: float
    tier: str
    severity: str
    code: str
    request_id: int | None = None


LOG_CODES = frozenset({"HTTP-500", "DB-TIMEOUT", "OOM", "DEADLOCK", "LOGIC-ERR", "CONN-REFUSED"})


def default_tiers() -> dict[str, dict]:
    return {
        "frontend": dict(service_rate=150.0, concurrency_limit=400, base_latency=5.0,
                         mem_capacity=512.0, mem_baseline=160.0),
        "api": dict(service_rate=110.0, concurrency_limit=300, base_latency=20.0,
                    mem_capacity=1024.0, mem_baseline=320.0),
        "db": dict(service_rate=120.0, concurrency_limit=200, base_latency=10.0,
                   mem_capacity=2048.0, mem_baseline=900.0),
    }


class WebApp:
    """Tiers, user processes and the per-window accumulators behind telemetry."""

    def __init__(
        self,
        sim: Simulation,
        tiers: dict[str, dict] | None = None,
        db_query_timeout: float = 2.0,
        latency_jitter: float = 0.2,
    ):
        self.sim = sim
        layout = tiers or default_tiers()
        self.tiers: dict[str, Tier] = {name: Tier(name=name, **layout[name]) for name in TIERS}
        self.db_query_timeout_ms = db_query_timeout * 1000.0
        self.latency_jitter = latency_jitter
        self.workload: WorkloadConfig | None = None
        self._rng = sim.stream("workload")
        self._ops: list[str] = []
        self._op_weights: list[float] = []
        self._next_request_id = 0
        self.ledger: list[Request] = []
        self.thinking = 0
        self.in_flight = 0
        self.log_sink: Callable[[LogEvent], None] | None = None
        self._win_rts: dict[str, list[float]] = {n: [] for n in TIERS}
        self._win_req: dict[str, int] = {n: 0 for n in TIERS}
        self._win_err: dict[str, int] = {n: 0 for n in TIERS}
        self._last_sample_us = 0
        self._saved: dict[int, dict] = {}
        self._hung: dict[int, tuple] = {}  # deadlocked request id -> completion payload
        sim.on(EventKind.REQUEST_ARRIVAL, self._on_arrival)
        sim.on(EventKind.REQUEST_COMPLETE, self._on_complete)

    # ------------------------------------------------------------------ workload
    def start_workload(self, cfg: WorkloadConfig) -> None:
        cfg.validate()
        self.workload = cfg
        self._ops = [op for op in OP_TYPES if cfg.op_mix.get(op, 0.0) > 0]
        self._op_weights = [cfg.op_mix[op] for op in self._ops]
        for user in range(cfg.users):
            self.thinking += 1
            if math.isinf(cfg.think_time):
                self.sim.schedule_us(EventKind.REQUEST_ARRIVAL, user, self.sim.clock_us)
            else:
                self._schedule_think(user)

    def _schedule_think(self, user: int) -> None:
        cfg = self.workload
        if math.isinf(cfg.think_time):
            return  # single-shot user: never issues again
        delay = self._rng.exp(1.0 / cfg.think_time)
        self.sim.schedule_us(EventKind.REQUEST_ARRIVAL, user, self.sim.clock_us + to_us(delay))

    def _on_arrival(self, ev: SimEvent) -> None:
        user = ev.payload
        op = self._ops[self._rng.choice_weighted(self._op_weights)]
        req = Request(id=self._next_request_id, op_type=op, arrival=self.sim.clock)
        self._next_request_id += 1
        self.thinking -= 1
        self.in_flight += 1
        self.ledger.append(req)
        trace = self.process_request(req)
        payload = (user, req, trace)
        if trace[4] == "DEADLOCK":
            self._hung[req.id] = payload
        self.sim.schedule_us(EventKind.REQUEST_COMPLETE, payload,
                             self.sim.clock_us + to_us(trace[0] / 1000.0))

    def process_request(self, req: Request) -> tuple:
        """Resolve the request's fate against current tier state.

        Returns ``(total_ms, status, code, fail_tier, log_code, per_tier)`` where
        ``per_tier`` lists ``(tier, latency_ms or None)`` for each tier reached.
        Status is final; the completion event applies it.
        """
        timeout_ms = self.workload.request_timeout * 1000.0 if self.workload else 10_000.0
        jitter = 1.0 + self.latency_jitter * self._rng.uniform01()
        path = OP_PATHS[req.op_type]
        req.path = path
        total = 0.0
        per_tier: list[tuple[str, float | None]] = []
        status, code, fail_tier, log_code = OK, None, None, None
        for name in path:
            tier = self.tiers[name]
            tier._arrivals += 1
            tier.in_flight += 1
            if tier.availability is Availability.DOWN:
                status, code, fail_tier, log_code = ERROR, 503, name, "CONN-REFUSED"
                per_tier.append((name, None))
                break
            if tier.in_flight > tier.concurrency_limit:
                status, code, fail_tier = ERROR, 503, name
                per_tier.append((name, None))
                break
            if req.op_type in tier.deadlock_ops:
                total = timeout_ms
                status, fail_tier, log_code = TIMEOUT, name, "DEADLOCK"
                per_tier.append((name, timeout_ms))
                break
            rho = min(max(tier.rho + tier.cpu_load_bias, 0.0), RHO_CAP)
            span = tier.mem_capacity - tier.mem_baseline
            pressure = max(0.0, (tier.mem_used - tier.mem_baseline) / span) if span > 0 else 0.0
            lat = tier.base_latency / (1.0 - rho) * tier.latency_factor * (1.0 + 2.0 * pressure) * jitter
            if name == "db" and lat > self.db_query_timeout_ms:
                lat = self.db_query_timeout_ms
                total += lat
                status, code, fail_tier, log_code = ERROR, 504, name, "DB-TIMEOUT"
                per_tier.append((name, lat))
                break
            total += lat
            per_tier.append((name, lat))
            rate = tier.error_injection_rate
            if rate > 0.0 and (tier.error_ops is None or req.op_type in tier.error_ops):
                if self._rng.bernoulli(rate):
                    log_code = tier.error_code
                    code = 503 if log_code == "CONN-REFUSED" else 500
                    status, fail_tier = ERROR, name
                    break
        if status == OK and total > timeout_ms:
            total, status = timeout_ms, TIMEOUT
        return (total, status, code, fail_tier, log_code, per_tier)

    def _on_complete(self, ev: SimEvent) -> None:
        user, req, (total, status, code, fail_tier, log_code, per_tier) = ev.payload
        if req.completion is not None:
            return  # already released early
        self._hung.pop(req.id, None)
        t = self.sim.clock
        req.completion = t
        req.status = status
        req.code = code
        self.in_flight -= 1
        self.thinking += 1
        for name, lat in per_tier:
            self.tiers[name].in_flight -= 1
            self._win_req[name] += 1
            if name == fail_tier:
                self._win_err[name] += 1
            if lat is not None:
                self._win_rts[name].append(lat)
        if log_code is not None and self.log_sink is not None:
            self.log_sink(LogEvent(t, fail_tier, "error", log_code, req.id))
        self._schedule_think(user)

    # ----------------------------------------------------------------- telemetry
    def sample_telemetry(self, t_us: int | None = None) -> list[TelemetrySample]:
        """Close the current window and return one sample per tier."""
        now = self.sim.clock_us if t_us is None else t_us
        window_s = max((now - self._last_sample_us) / US_PER_S, 1e-9)
        self._last_sample_us = now
        t = now / US_PER_S
        self.advance_memory(now)
        samples = []
        for name in TIERS:
            tier = self.tiers[name]
            rts = self._win_rts[name]
            if rts:
                rts.sort()
                mean_rt = sum(rts) / len(rts)
                p95 = rts[max(0, math.ceil(0.95 * len(rts)) - 1)]
            else:
                mean_rt = p95 = None
            samples.append(TelemetrySample(
                t=t, tier=name,
                cpu_util=min(1.0, tier.effective_rho()),
                mem_used=tier.mem_used,
                mean_rt=mean_rt, p95_rt=p95,
                request_count=self._win_req[name],
                error_count=self._win_err[name],
                queue_len=tier.in_flight,
                available=tier.up,
            ))
            tier.rho = tier._arrivals / (tier.service_rate * window_s) if tier.up else 0.0
            tier._arrivals = 0
            self._win_rts[name] = []
            self._win_req[name] = 0
            self._win_err[name] = 0
        return samples

    def advance_memory(self, now_us: int) -> None:
        for tier in self.tiers.values():
            dt = (now_us - tier._mem_t_us) / US_PER_S
            tier._mem_t_us = now_us
            if tier.leak_rate > 0.0 and tier.up and dt > 0:
                tier.mem_used = min(tier.mem_used + tier.leak_rate * dt, tier.mem_capacity * 1.05)
                if tier.mem_used >= tier.oom_threshold and not tier.oom_crashed:
                    tier.availability = Availability.DOWN
                    tier.oom_crashed = True
                    log.debug("OOM crash on %s at %.1fs", tier.name, now_us / US_PER_S)
                    if self.log_sink is not None:
                        self.log_sink(LogEvent(now_us / US_PER_S, tier.name, "error", "OOM"))

    # ------------------------------------------------------------- fault effects
    def apply_effect(self, effect) -> None:
        """Mutate the target tier per the effect's fault type.

        ``effect`` is a chaos ``FaultEffect``; the prior field values are saved
        under ``effect.key`` so ``revert_effect`` can restore them.
        """
        tier = self._tier(effect.target)
        self.advance_memory(self.sim.clock_us)
        kind = effect.fault_type
        p = effect.params
        saved = {}

        def setf(attr, value):
            saved.setdefault(attr, getattr(tier, attr))
            setattr(tier, attr, value)

        if kind == "ServiceCrash":
            setf("availability", Availability.DOWN)
        elif kind == "MemoryLeak":
            setf("leak_rate", p["leak_rate"])
            setf("oom_threshold", tier.mem_capacity * p.get("oom_jitter", 1.0))
        elif kind == "DbDisconnect":
            setf("error_injection_rate", p.get("error_rate", 1.0))
            setf("error_code", "CONN-REFUSED")
            setf("error_ops", None)
        elif kind == "DbTimeout":
            setf("latency_factor", p["timeout_factor"])
        elif kind == "CpuOverload":
            setf("cpu_load_bias", p["cpu_bias"])
        elif kind == "Http500Burst":
            setf("error_injection_rate", p["error_rate"])
            setf("error_code", "HTTP-500")
            setf("error_ops", None)
        elif kind == "LogicError":
            setf("error_injection_rate", p["error_rate"])
            setf("error_code", "LOGIC-ERR")
            setf("error_ops", frozenset(p["ops"]))
            setf("deploy_version", tier.deploy_version + 1)
        elif kind == "Deadlock":
            setf("deadlock_ops", frozenset(p["ops"]))
        else:
            raise ValueError(f"unknown fault type {kind!r}")
        self._saved[effect.key] = saved

    def revert_effect(self, effect) -> None:
        tier = self._tier(effect.target)
        self.advance_memory(self.sim.clock_us)
        saved = self._saved.pop(effect.key, {})
        for attr, value in saved.items():
            if attr == "deploy_version":
                continue  # versions move forward; rollback is an action
            setattr(tier, attr, value)
        if effect.fault_type == "MemoryLeak":
            tier.mem_used = tier.mem_baseline  # repaired or torn-down process starts fresh
        if "deadlock_ops" in saved:
            self._release_hung(tier.name)
        if tier.oom_crashed:
            # the OOM-killed process comes back up
            tier.oom_crashed = False
            tier.mem_used = tier.mem_baseline
            tier.availability = Availability.UP
        if tier.restarting:
            tier.availability = Availability.DOWN

    def _release_hung(self, name: str) -> None:
        """Lock waiters on ``name`` proceed once the deadlock is broken."""
        now = self.sim.clock
        for rid in sorted(self._hung):
            user, req, trace = self._hung[rid]
            if trace[3] != name:
                continue
            del self._hung[rid]
            waited = (now - req.arrival) * 1000.0
            per_tier = [(t, waited if t == name else lat) for t, lat in trace[5]]
            self.sim.schedule_us(EventKind.REQUEST_COMPLETE,
                                 (user, req, (waited, OK, None, None, None, per_tier)),
                                 self.sim.clock_us)

    # ----------------------------------------------------------- action effects
    def begin_restart(self, name: str) -> None:
        tier = self._tier(name)
        self.advance_memory(self.sim.clock_us)
        tier.restarting = True
        tier.availability = Availability.DOWN

    def finish_restart(self, name: str, fault_down: bool) -> None:
        """Bring a restarted tier back; it stays down if its fault still holds it down."""
        tier = self._tier(name)
        self.advance_memory(self.sim.clock_us)
        tier.restarting = False
        if fault_down:
            tier.availability = Availability.DOWN
        else:
            tier.availability = Availability.UP
            tier.mem_used = tier.mem_baseline
            tier.oom_crashed = False

    def _tier(self, name: str) -> Tier:
        try:
            return self.tiers[name]
        except KeyError:
            raise KeyError(f"unknown tier {name!r}") from None

    def healthy_path_latency(self, op: str) -> float:
        return sum(self.tiers[n].base_latency for n in OP_PATHS[op])

    def counts(self) -> dict[str, int]:
        c = {OK: 0, ERROR: 0, TIMEOUT: 0, IN_FLIGHT: 0}
        for r in self.ledger:
            c[r.status] += 1
        return c
