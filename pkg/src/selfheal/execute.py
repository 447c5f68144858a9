"""Recovery actions, their calibration tables, outcomes and the healing modes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .chaos import RECOVERY_CLASSES, FaultType
from .engine import RngStream
from .plan import ACTIONS
from .webapp import TelemetrySample


class Mode(str, Enum):
    AUTOFIX = "AutoFix"
    MANUAL = "ManualRunbook"
    RULE_ONLY = "RuleOnly"
    ORCHESTRATOR = "OrchestratorOnly"
    NO_HEAL = "NoHeal"

    @classmethod
    def parse(cls, name: str) -> "Mode":
        for m in cls:
            if name.lower() in (m.value.lower(), m.name.lower()):
                return m
        raise ValueError(f"unknown mode {name!r}; expected one of {[m.value for m in cls]}")


class StaleExecution(RuntimeError):
    pass


DEFAULT_ACTION_LATENCY: dict[str, float] = {
    "RestartService": 3.0,
    "RollbackDeploy": 3.5,
    "ClearCache": 1.0,
    "ReconnectDb": 2.5,
    "ApplyPatch": 3.8,
    "ThrottleTraffic": 0.5,
    "ScaleOut": 4.0,
}


def _table(**rows: dict[str, float]) -> dict[str, dict[str, float]]:
    return {ft: {a: rows.get(ft, {}).get(a, 0.0) for a in ACTIONS} for ft in rows}


# P(action clears the fault); unlisted pairs never help
DEFAULT_SUCCESS: dict[str, dict[str, float]] = _table(
    ServiceCrash={"RestartService": 1.0, "RollbackDeploy": 0.0},
    MemoryLeak={"RestartService": 0.4, "ApplyPatch": 0.93},
    DbDisconnect={"ReconnectDb": 0.4, "RestartService": 0.95},
    DbTimeout={"ReconnectDb": 0.4, "RestartService": 0.95},
    CpuOverload={"ThrottleTraffic": 0.75, "ScaleOut": 0.9},
    Http500Burst={"RollbackDeploy": 0.4, "ApplyPatch": 0.93},
    LogicError={"ApplyPatch": 0.4, "RollbackDeploy": 0.93},
    Deadlock={"ApplyPatch": 0.4, "RollbackDeploy": 0.93, "RestartService": 0.4},
)

MANUAL_TTR_MEAN: dict[str, float] = {
    "Service crash": 7.80,
    "Memory leak": 10.40,
    "DB timeout": 9.20,
    "High CPU usage": 8.50,
    "Bug patch": 8.90,
}
MANUAL_SUCCESS = 0.90
MANUAL_SIGMA_FRAC = 0.10
MANUAL_FLOOR = 0.5

LATENCY_JITTER = 0.10
MAX_ATTEMPTS = 3
VERIFY_TICKS = 3
VERIFY_MAX_TICKS = 5
VERIFY_ERROR_RATE = 0.01
VERIFY_RT_FACTOR = 1.5
PROBE_WINDOW = 3
ORCHESTRATOR_RESTART = 3.0
ORCHESTRATOR_MAX_RESTARTS = 3


@dataclass
class Calibration:
    latency: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ACTION_LATENCY))
    success: dict[str, dict[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_SUCCESS.items()})
    manual_ttr: dict[str, float] = field(default_factory=lambda: dict(MANUAL_TTR_MEAN))
    manual_success: float = MANUAL_SUCCESS

    def validate(self, path: str = "calibration") -> None:
        for a in ACTIONS:
            if a not in self.latency:
                raise ValueError(f"{path}.latency.{a}: missing")
            if not self.latency[a] > 0:
                raise ValueError(f"{path}.latency.{a}: must be > 0")
        for ft, row in self.success.items():
            if ft not in {f.value for f in FaultType}:
                raise ValueError(f"{path}.success.{ft}: unknown fault type")
            for a, p in row.items():
                if a not in ACTIONS:
                    raise ValueError(f"{path}.success.{ft}.{a}: unknown action")
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"{path}.success.{ft}.{a}: probability outside [0,1]")
        for cls in RECOVERY_CLASSES:
            if not self.manual_ttr.get(cls, 0) > 0:
                raise ValueError(f"{path}.manual_ttr.{cls}: must be > 0")
        if not 0.0 <= self.manual_success <= 1.0:
            raise ValueError(f"{path}.manual_success: probability outside [0,1]")

    def p_success(self, fault_type: str, action: str) -> float:
        return self.success.get(fault_type, {}).get(action, 0.0)

    def action_latency(self, action: str, stream: RngStream) -> float:
        return self.latency[action] * stream.uniform(1.0 - LATENCY_JITTER, 1.0 + LATENCY_JITTER)

    def to_json(self) -> dict:
        return {"latency": dict(self.latency), "success": {k: dict(v) for k, v in self.success.items()},
                "manual_ttr": dict(self.manual_ttr), "manual_success": self.manual_success}


def trunc_normal(stream: RngStream, mean: float, sigma: float, floor: float = MANUAL_FLOOR) -> float:
    """Normal draw conditioned on ``>= floor`` by rejection."""
    for _ in range(10_000):
        x = stream.normal(mean, sigma)
        if x >= floor:
            return x
    return floor


@dataclass
class RecoveryOutcome:
    """Result of one remediation incident (one diagnosis that triggered recovery)."""

    incident_id: int
    mode: str
    tier: str
    diagnosed_class: str
    t_detected: float
    strategy_id: str | None = None
    plan_mode: str | None = None
    fault_id: int | None = None
    fault_type: str | None = None
    success: bool = False
    t_recovered: float | None = None
    attempts: int = 0
    actions_executed: list[tuple[str, str, float, float, bool]] = field(default_factory=list)
    first_pass_success: bool = False
    stale: bool = False
    finished: bool = False

    @property
    def ttr(self) -> float | None:
        if not self.success or self.t_recovered is None:
            return None
        return self.t_recovered - self.t_detected


def tier_healthy(sample: TelemetrySample, baseline_rt: float, prev_mem: float | None = None) -> bool:
    """Verification predicate on one telemetry sample of the repaired tier."""
    if not sample.available:
        return False
    if sample.request_count and sample.error_count / sample.request_count >= VERIFY_ERROR_RATE:
        return False
    if sample.mean_rt is not None and sample.mean_rt >= VERIFY_RT_FACTOR * baseline_rt:
        return False
    if prev_mem is not None and sample.mem_used > prev_mem + 1e-6:
        return False
    return True


def attempt_sequence(ranking, max_attempts: int = MAX_ATTEMPTS, fallback: bool = True) -> list[tuple[str, str]]:
    """Flatten strategies into at most ``max_attempts`` (strategy id, action) attempts.

    With ``fallback`` the ranked strategies are walked in order and cycled;
    without it the first strategy is retried.
    """
    order = list(ranking) if fallback else [ranking[0]]
    out: list[tuple[str, str]] = []
    while len(out) < max_attempts:
        for st in order:
            for a in st.actions:
                out.append((st.id, a))
                if len(out) == max_attempts:
                    return out
    return out


def verify_start_tick(t_complete: float) -> float:
    return float(math.ceil(t_complete - 1e-9) + 1)
