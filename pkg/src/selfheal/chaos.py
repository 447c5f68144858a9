"""Fault catalog, injection bookkeeping and Poisson fault campaigns.

The 20-entry catalog is a reconstruction: eight concrete fault types spread over
targets and severities, each folded onto one of five reported detection classes.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .engine import RngStream, Simulation
from .webapp import TIERS, WebApp

HTTP_500 = "HTTP 500 errors"
CPU_OVERLOAD = "CPU overload"
MEMORY_LEAK = "Memory leak"
DB_TIMEOUT = "DB connection timeout"
LOGIC_ERROR = "Application logic error"
SERVICE_CRASH = "ServiceCrash"

REPORT_CLASSES = (HTTP_500, CPU_OVERLOAD, MEMORY_LEAK, DB_TIMEOUT, LOGIC_ERROR)
DIAGNOSIS_CLASSES = (SERVICE_CRASH,) + REPORT_CLASSES

# Table-2 style recovery rows
RECOVERY_CLASSES = ("Service crash", "Memory leak", "DB timeout", "High CPU usage", "Bug patch")


class FaultType(str, Enum):
    SERVICE_CRASH = "ServiceCrash"
    MEMORY_LEAK = "MemoryLeak"
    DB_DISCONNECT = "DbDisconnect"
    DB_TIMEOUT = "DbTimeout"
    CPU_OVERLOAD = "CpuOverload"
    HTTP500_BURST = "Http500Burst"
    LOGIC_ERROR = "LogicError"
    DEADLOCK = "Deadlock"

    @property
    def report_class(self) -> str:
        return _REPORT_CLASS[self]

    @property
    def diagnosis_class(self) -> str:
        """Class a perfect analyzer would emit (crashes keep their own label)."""
        return SERVICE_CRASH if self is FaultType.SERVICE_CRASH else _REPORT_CLASS[self]

    @property
    def recovery_class(self) -> str:
        return _RECOVERY_CLASS[self]


_REPORT_CLASS = {
    FaultType.SERVICE_CRASH: HTTP_500,
    FaultType.MEMORY_LEAK: MEMORY_LEAK,
    FaultType.DB_DISCONNECT: DB_TIMEOUT,
    FaultType.DB_TIMEOUT: DB_TIMEOUT,
    FaultType.CPU_OVERLOAD: CPU_OVERLOAD,
    FaultType.HTTP500_BURST: HTTP_500,
    FaultType.LOGIC_ERROR: LOGIC_ERROR,
    FaultType.DEADLOCK: LOGIC_ERROR,
}
_RECOVERY_CLASS = {
    FaultType.SERVICE_CRASH: "Service crash",
    FaultType.MEMORY_LEAK: "Memory leak",
    FaultType.DB_DISCONNECT: "DB timeout",
    FaultType.DB_TIMEOUT: "DB timeout",
    FaultType.CPU_OVERLOAD: "High CPU usage",
    FaultType.HTTP500_BURST: "Bug patch",
    FaultType.LOGIC_ERROR: "Bug patch",
    FaultType.DEADLOCK: "Bug patch",
}


def report_class_of(diagnosis_class: str) -> str:
    """Fold a diagnosis class onto the five reported detection classes."""
    return HTTP_500 if diagnosis_class == SERVICE_CRASH else diagnosis_class


@dataclass(frozen=True)
class FaultScenario:
    id: int
    fault_type: FaultType
    target: str
    severity: str
    params: dict = field(hash=False, compare=False)
    duration: float

    def to_json(self) -> dict:
        d = asdict(self)
        d["fault_type"] = self.fault_type.value
        d["report_class"] = self.fault_type.report_class
        d["recovery_class"] = self.fault_type.recovery_class
        return d


def _sc(i, ft, target, sev, duration, **params):
    return FaultScenario(i, ft, target, sev, params, float(duration))


_CATALOG = (
    _sc(1, FaultType.SERVICE_CRASH, "api", "high", 45),
    _sc(2, FaultType.SERVICE_CRASH, "frontend", "high", 45),
    _sc(3, FaultType.SERVICE_CRASH, "db", "high", 45),
    _sc(4, FaultType.MEMORY_LEAK, "api", "low", 60, leak_rate=4.0),
    _sc(5, FaultType.MEMORY_LEAK, "api", "high", 60, leak_rate=10.0),
    _sc(6, FaultType.MEMORY_LEAK, "db", "high", 60, leak_rate=16.0),
    _sc(7, FaultType.DB_DISCONNECT, "db", "high", 45, error_rate=1.0),
    _sc(8, FaultType.DB_DISCONNECT, "db", "low", 45, error_rate=0.4),
    _sc(9, FaultType.DB_TIMEOUT, "db", "low", 45, timeout_factor=60.0),
    _sc(10, FaultType.DB_TIMEOUT, "db", "high", 45, timeout_factor=250.0),
    _sc(11, FaultType.CPU_OVERLOAD, "api", "high", 45, cpu_bias=0.65),
    _sc(12, FaultType.CPU_OVERLOAD, "api", "low", 45, cpu_bias=0.55),
    _sc(13, FaultType.CPU_OVERLOAD, "db", "high", 45, cpu_bias=0.65),
    _sc(14, FaultType.CPU_OVERLOAD, "frontend", "high", 45, cpu_bias=0.75),
    _sc(15, FaultType.HTTP500_BURST, "frontend", "high", 45, error_rate=0.3),
    _sc(16, FaultType.HTTP500_BURST, "api", "high", 45, error_rate=0.3),
    _sc(17, FaultType.HTTP500_BURST, "api", "low", 45, error_rate=0.12),
    _sc(18, FaultType.LOGIC_ERROR, "api", "high", 45, error_rate=0.6, ops=["upload"]),
    _sc(19, FaultType.LOGIC_ERROR, "api", "low", 45, error_rate=0.4, ops=["login"]),
    _sc(20, FaultType.DEADLOCK, "db", "high", 45, ops=["login"]),
)


def catalog() -> list[FaultScenario]:
    return list(_CATALOG)


def scenario(scenario_id: int) -> FaultScenario:
    if not 1 <= scenario_id <= len(_CATALOG):
        raise KeyError(f"unknown scenario {scenario_id}")
    return _CATALOG[scenario_id - 1]


def dump_catalog(path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([s.to_json() for s in _CATALOG], indent=2) + "\n")
    return path


@dataclass(frozen=True)
class FaultEffect:
    key: int
    fault_type: str
    target: str
    params: dict = field(hash=False, compare=False)


@dataclass
class FaultEvent:
    fault_id: int
    scenario_id: int
    fault_type: FaultType
    target: str
    t_injected: float
    t_cleared: float | None = None
    cleared_by: str = "none"  # action | expiry | none

    @property
    def active(self) -> bool:
        return self.t_cleared is None


class Chaos:
    """Applies catalog scenarios to the webapp and keeps the ground-truth ledger."""

    def __init__(self, sim: Simulation, app: WebApp, scenarios: list[FaultScenario] | None = None):
        self.sim = sim
        self.app = app
        self._scenarios = {s.id: s for s in (scenarios or catalog())}
        self._rng = sim.stream("faults")
        self.ledger: list[FaultEvent] = []
        self._effects: dict[int, FaultEffect] = {}
        self.on_clear = []  # callbacks(FaultEvent)

    def inject(self, scenario_id: int, t: float | None = None) -> FaultEvent:
        try:
            sc = self._scenarios[scenario_id]
        except KeyError:
            raise KeyError(f"unknown scenario {scenario_id}") from None
        if sc.target not in self.app.tiers:
            raise KeyError(f"scenario {scenario_id} targets unknown tier {sc.target!r}")
        t = self.sim.clock if t is None else t
        params = dict(sc.params)
        if sc.fault_type is FaultType.MEMORY_LEAK:
            params["oom_jitter"] = self._rng.uniform(0.95, 1.05)
        fault_id = len(self.ledger) + 1
        effect = FaultEffect(fault_id, sc.fault_type.value, sc.target, params)
        self.app.apply_effect(effect)
        self._effects[fault_id] = effect
        ev = FaultEvent(fault_id, sc.id, sc.fault_type, sc.target, t)
        self.ledger.append(ev)
        return ev

    def clear(self, fault_id: int, t: float | None = None, cleared_by: str = "action") -> FaultEvent:
        if not 1 <= fault_id <= len(self.ledger):
            raise KeyError(f"unknown fault {fault_id}")
        ev = self.ledger[fault_id - 1]
        if not ev.active:
            raise ValueError(f"fault {fault_id} already cleared at t={ev.t_cleared}")
        if cleared_by not in ("action", "expiry"):
            raise ValueError(f"cleared_by must be 'action' or 'expiry', got {cleared_by!r}")
        self.app.revert_effect(self._effects.pop(fault_id))
        ev.t_cleared = self.sim.clock if t is None else t
        ev.cleared_by = cleared_by
        for cb in self.on_clear:
            cb(ev)
        return ev

    def active_on(self, tier: str) -> FaultEvent | None:
        for ev in reversed(self.ledger):
            if ev.active and ev.target == tier:
                return ev
        return None

    def active(self) -> list[FaultEvent]:
        return [ev for ev in self.ledger if ev.active]


def schedule_campaign(
    rate: float,
    duration: float,
    mix: dict[int, float],
    stream: RngStream,
    scenarios: list[FaultScenario] | None = None,
) -> list[tuple[float, int]]:
    """Poisson injection plan as (offset seconds, scenario id) pairs.

    A tier hosts at most one fault at a time: an injection whose target is still
    busy (within the previous scenario's duration) slides forward in 1 s steps.
    """
    if rate < 0:
        raise ValueError("campaign rate must be >= 0")
    by_id = {s.id: s for s in (scenarios or catalog())}
    if not mix or any(w < 0 for w in mix.values()) or sum(mix.values()) <= 0:
        raise ValueError("campaign mix must have non-negative weights with a positive sum")
    unknown = set(mix) - set(by_id)
    if unknown:
        raise ValueError(f"campaign mix references unknown scenarios {sorted(unknown)}")
    if rate == 0:
        return []
    ids = sorted(i for i, w in mix.items() if w > 0)
    weights = [mix[i] for i in ids]
    busy_until = {name: 0.0 for name in TIERS}
    plan: list[tuple[float, int]] = []
    t = 0.0
    lam = rate / 60.0
    while True:
        t += stream.exp(lam)
        if t >= duration:
            break
        sid = ids[stream.choice_weighted(weights)]
        sc = by_id[sid]
        when = t
        while when < busy_until[sc.target]:
            when += 1.0
        if when >= duration:
            continue
        busy_until[sc.target] = when + sc.duration
        plan.append((round(when, 6), sid))
    plan.sort()
    return plan
