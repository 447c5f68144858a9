"""The MAPE-K controller: wires monitor, analyzer, knowledge base and executor
onto the simulation clock for one healing mode."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .analyze.analyzer import Analyzer, Diagnosis, DetectorModels
from .analyze.confusion import DetectionScorer
from .chaos import Chaos, FaultType
from .engine import EventKind, SimEvent, Simulation
from .execute import (
    MAX_ATTEMPTS, ORCHESTRATOR_MAX_RESTARTS, ORCHESTRATOR_RESTART, PROBE_WINDOW, VERIFY_MAX_TICKS,
    VERIFY_TICKS, Calibration, Mode, RecoveryOutcome, attempt_sequence, tier_healthy, trunc_normal,
    verify_start_tick, MANUAL_SIGMA_FRAC, LATENCY_JITTER,
)
from .monitor import Monitor
from .plan import KnowledgeBase
from .webapp import TIERS, WebApp

log = logging.getLogger(__name__)


@dataclass
class LoopConfig:
    mode: Mode = Mode.AUTOFIX
    threshold: float = 0.85
    eps: float = 0.1
    feedback: bool = True
    quiet: float = 10.0
    healthy_ticks: int = 3
    match_window: float = 30.0
    tick: float = 1.0
    max_attempts: int = MAX_ATTEMPTS
    baseline_from: float = 10.0
    baseline_to: float = 40.0
    calibration: Calibration = field(default_factory=Calibration)


@dataclass
class _Exec:
    attempts: list[tuple[str, str]]
    first_strategy: str
    first_len: int
    idx: int = 0
    t_start: float = 0.0
    strategy_start: dict[str, float] = field(default_factory=dict)
    verify_from: float | None = None
    checked: int = 0
    healthy: int = 0
    t_complete: float = 0.0


@dataclass
class _Probe:
    down: int = 0
    first_fail: float | None = None
    restarts: int = 0
    restarting: bool = False
    incident: int | None = None


class Controller:
    """One run's control loop. Ground truth from ``chaos`` is used only to apply
    action physics and for harness-side scoring, never for decisions."""

    def __init__(self, sim: Simulation, app: WebApp, chaos: Chaos, monitor: Monitor,
                 models: DetectorModels | None, kb: KnowledgeBase | None, cfg: LoopConfig):
        self.sim, self.app, self.chaos, self.monitor, self.cfg = sim, app, chaos, monitor, cfg
        self.mode = cfg.mode
        use_ml = self.mode not in (Mode.RULE_ONLY, Mode.ORCHESTRATOR)
        self.analyzer = Analyzer(monitor, models, cfg.threshold, use_ml=use_ml and models is not None)
        if self.mode is Mode.RULE_ONLY:
            kb = KnowledgeBase(kb.rules if kb else None, learning=False)
        self.kb = kb if kb is not None else KnowledgeBase(learning=cfg.feedback)
        self.scorer = DetectionScorer(cfg.match_window)
        self.rng = sim.stream("actions")
        self.outcomes: list[RecoveryOutcome] = []
        self._exec: dict[int, _Exec] = {}
        self._closing: dict[str, int] = {}  # tier -> consecutive healthy ticks while waiting to release
        self._probe = {t: _Probe() for t in TIERS}
        self.baseline_rt: dict[str, float] | None = None
        self._started = False
        self.t_end = 0.0
        self.tick_hooks = []  # callables(t) run after each control tick
        app.log_sink = monitor.ingest_log
        chaos.on_clear.append(self.scorer.fault_closed)
        sim.on(EventKind.TELEMETRY_TICK, self._on_telemetry)
        sim.on(EventKind.MAPE_TICK, self._on_mape)
        sim.on(EventKind.ACTION_COMPLETE, self._on_action_complete)

    def set_mode(self, mode: Mode) -> None:
        if self._started:
            raise RuntimeError("mode cannot change after the run has started")
        self.chaos.on_clear.remove(self.scorer.fault_closed)
        self.__init__(self.sim, self.app, self.chaos, self.monitor, self.analyzer.models, self.kb,
                      LoopConfig(**{**self.cfg.__dict__, "mode": mode}))

    def start(self, t_end: float) -> None:
        self._started = True
        self.t_end = t_end
        first = self.sim.clock + self.cfg.tick
        self.sim.schedule(EventKind.TELEMETRY_TICK, None, first)
        self.sim.schedule(EventKind.MAPE_TICK, None, first)

    # ------------------------------------------------------------------ ticks
    def _on_telemetry(self, ev: SimEvent) -> None:
        for s in self.app.sample_telemetry():
            self.monitor.ingest(s)
        nxt = self.sim.clock + self.cfg.tick
        if nxt <= self.t_end + 1e-9:
            self.sim.schedule(EventKind.TELEMETRY_TICK, None, nxt)

    def _on_mape(self, ev: SimEvent) -> None:
        t = self.sim.clock
        if self.baseline_rt is None and t >= self.cfg.baseline_to - 1e-9:
            self._set_baseline(t)
        if self.baseline_rt is not None:
            if self.mode is Mode.ORCHESTRATOR:
                self._orchestrator_tick(t)
            else:
                self._verify(t)
                self._release_when_healthy(t)
                self._analyze(t)
        for hook in self.tick_hooks:
            hook(t)
        nxt = t + self.cfg.tick
        if nxt <= self.t_end + 1e-9:
            self.sim.schedule(EventKind.MAPE_TICK, None, nxt)

    def _set_baseline(self, t: float) -> None:
        span = t - self.cfg.baseline_from
        base = {}
        for tier in TIERS:
            w = self.monitor.window("mean_rt", tier, span, t)
            base[tier] = w.mean if w.count else 1.0
        self.baseline_rt = base

    def _latest(self, tier: str, t: float):
        s = self.monitor.samples(tier, 2.0 * self.cfg.tick, t)
        cur = s[-1] if s else None
        prev = s[-2] if len(s) > 1 else None
        return cur, prev

    def _healthy(self, tier: str, t: float) -> bool:
        cur, prev = self._latest(tier, t)
        if cur is None:
            return False
        return tier_healthy(cur, self.baseline_rt[tier], prev.mem_used if prev else None)

    # ---------------------------------------------------------------- analyze
    def _analyze(self, t: float) -> None:
        diags = self.analyzer.diagnose(t, TIERS)
        if not diags:
            self.scorer.update_confusion(None, self.chaos.active(), t)
        for d in diags:
            self.scorer.update_confusion(d, self.chaos.active(), t)
            log.debug("t=%.1f diagnosis %s on %s (%s)", t, d.fault_class, d.tier, d.source)
            if self.mode in (Mode.AUTOFIX, Mode.RULE_ONLY):
                self._start_incident(d, t)
            elif self.mode is Mode.MANUAL:
                self._start_manual(d, t)
            else:
                self._closing[d.tier] = 0

    def _new_outcome(self, tier: str, cls: str, t: float) -> RecoveryOutcome:
        fault = self.chaos.active_on(tier)
        out = RecoveryOutcome(len(self.outcomes) + 1, self.mode.value, tier, cls, t,
                              fault_id=fault.fault_id if fault else None,
                              fault_type=fault.fault_type.value if fault else None)
        self.outcomes.append(out)
        return out

    # ---------------------------------------------------------------- execute
    def _start_incident(self, d: Diagnosis, t: float) -> None:
        out = self._new_outcome(d.tier, d.fault_class, t)
        if self.mode is Mode.RULE_ONLY:
            ranking = self.kb.strategies(d.fault_class)
            seq = attempt_sequence(ranking, self.cfg.max_attempts, fallback=False)
            out.strategy_id, out.plan_mode = ranking[0].id, "rule-default"
        else:
            plan = self.kb.select(d, self.cfg.eps, self.rng)
            by_id = {st.id: st for st in self.kb.strategies(d.fault_class)}
            ranking = [by_id[sid] for sid in plan.ranking]
            seq = attempt_sequence(ranking, self.cfg.max_attempts, fallback=True)
            out.strategy_id, out.plan_mode = plan.strategy_id, plan.mode
        self.analyzer.held.add(d.tier)
        self._exec[out.incident_id] = _Exec(seq, ranking[0].id, len(ranking[0].actions))
        self._begin_attempt(out, t)

    def _begin_attempt(self, out: RecoveryOutcome, t: float) -> None:
        ex = self._exec[out.incident_id]
        sid, action = ex.attempts[ex.idx]
        ex.strategy_start.setdefault(sid, t)
        ex.t_start = t
        ex.verify_from = None
        out.attempts += 1
        lat = self.cfg.calibration.action_latency(action, self.rng)
        if action == "RestartService":
            self.app.begin_restart(out.tier)
        self.sim.schedule(EventKind.ACTION_COMPLETE, ("action", out.incident_id), t + lat)

    def _apply_repair(self, tier: str, action: str, p_of) -> tuple[bool, bool]:
        """Draw the action's effect on the tier's active fault: (had_fault, cleared)."""
        fault = self.chaos.active_on(tier)
        cleared = False
        if fault is not None:
            if self.rng.bernoulli(p_of(fault)):
                self.chaos.clear(fault.fault_id, cleared_by="action")
                cleared = True
        if action == "RestartService":
            still = self.chaos.active_on(tier)
            self.app.finish_restart(tier, still is not None and still.fault_type is FaultType.SERVICE_CRASH)
        return fault is not None, cleared

    def _on_action_complete(self, ev: SimEvent) -> None:
        kind, ref = ev.payload
        t = self.sim.clock
        if kind == "orchestrator":
            self._orchestrator_complete(ref, t)
            return
        out = self.outcomes[ref - 1]
        if kind == "manual":
            self._manual_complete(out, t)
            return
        ex = self._exec[out.incident_id]
        sid, action = ex.attempts[ex.idx]
        cal = self.cfg.calibration
        had, cleared = self._apply_repair(out.tier, action, lambda f: cal.p_success(f.fault_type.value, action))
        if out.fault_id is not None and not had:
            out.stale = True
        out.actions_executed.append((sid, action, ex.t_start, t, cleared))
        ex.t_complete = t
        ex.verify_from = verify_start_tick(t)
        ex.checked = ex.healthy = 0

    def _verify(self, t: float) -> None:
        for iid in sorted(self._exec):
            ex = self._exec[iid]
            if ex.verify_from is None or t < ex.verify_from - 1e-9:
                continue
            out = self.outcomes[iid - 1]
            ex.checked += 1
            ex.healthy = ex.healthy + 1 if self._healthy(out.tier, t) else 0
            if ex.healthy >= VERIFY_TICKS:
                self._finish(out, ex, t, success=True)
            elif self._verification_failed(ex):
                ex.idx += 1
                if ex.idx < len(ex.attempts):
                    self._begin_attempt(out, t)
                else:
                    self._finish(out, ex, t, success=False)

    def _verification_failed(self, ex: _Exec) -> bool:
        # the AutoFix executor aborts once 3 healthy ticks can no longer fit in the
        # window; a plain rule engine re-checks only when its window has elapsed
        if self.mode is Mode.RULE_ONLY:
            return ex.checked >= VERIFY_MAX_TICKS
        return VERIFY_MAX_TICKS - ex.checked < VERIFY_TICKS - ex.healthy

    def _finish(self, out: RecoveryOutcome, ex: _Exec, t: float, success: bool) -> None:
        del self._exec[out.incident_id]
        out.finished = True
        out.success = success
        tried = list(dict.fromkeys(sid for sid, _ in ex.attempts[:ex.idx + 1]))
        if success:
            out.t_recovered = ex.t_complete
            out.first_pass_success = ex.idx < ex.first_len and all(
                sid == ex.first_strategy for sid, _ in ex.attempts[:ex.idx + 1])
            self.analyzer.held.discard(out.tier)
            self.analyzer.resolve_tier(out.tier, t, self.cfg.quiet)
        else:
            self._closing[out.tier] = 0
        if self.mode is Mode.AUTOFIX and self.kb.learning:
            winner = ex.attempts[ex.idx][0] if success else None
            for sid in tried:
                ok = sid == winner
                ttr = ex.t_complete - ex.strategy_start[sid] if ok else None
                self.kb.record_outcome(out.diagnosed_class, sid, ok, ttr, (self.sim.seed, out.incident_id, sid))

    def _release_when_healthy(self, t: float) -> None:
        for tier in sorted(self._closing):
            if self._healthy(tier, t):
                self._closing[tier] += 1
            else:
                self._closing[tier] = 0
            if self._closing[tier] >= self.cfg.healthy_ticks:
                del self._closing[tier]
                self.analyzer.held.discard(tier)
                self.analyzer.resolve_tier(tier, t, self.cfg.quiet)

    # ----------------------------------------------------------------- manual
    def _start_manual(self, d: Diagnosis, t: float) -> None:
        out = self._new_outcome(d.tier, d.fault_class, t)
        out.strategy_id, out.plan_mode = "runbook", "manual"
        self.analyzer.held.add(d.tier)
        cal = self.cfg.calibration
        if out.fault_type is not None:
            mean = cal.manual_ttr[FaultType(out.fault_type).recovery_class]
        else:
            mean = sum(cal.manual_ttr.values()) / len(cal.manual_ttr)
        delay = trunc_normal(self.rng, mean, MANUAL_SIGMA_FRAC * mean)
        out.attempts = 1
        self.sim.schedule(EventKind.ACTION_COMPLETE, ("manual", out.incident_id), t + delay)

    def _manual_complete(self, out: RecoveryOutcome, t: float) -> None:
        fault = self.chaos.active_on(out.tier)
        cleared = False
        if fault is not None and fault.fault_id == out.fault_id:
            if self.rng.bernoulli(self.cfg.calibration.manual_success):
                self.chaos.clear(fault.fault_id, cleared_by="action")
                cleared = True
        elif out.fault_id is not None:
            out.stale = True
        out.actions_executed.append(("runbook", "Manual", out.t_detected, t, cleared))
        out.finished = True
        out.success = cleared or out.fault_id is None
        out.first_pass_success = out.success
        if out.success:
            out.t_recovered = t
        self._closing[out.tier] = 0

    # ----------------------------------------------------------- orchestrator
    def _orchestrator_tick(self, t: float) -> None:
        for tier in TIERS:
            pr = self._probe[tier]
            if pr.restarting:
                continue
            cur, _ = self._latest(tier, t)
            if cur is None or cur.available:
                pr.down, pr.first_fail, pr.restarts, pr.incident = 0, None, 0, None
                continue
            pr.down += 1
            if pr.first_fail is None:
                pr.first_fail = t
            if pr.down >= PROBE_WINDOW and pr.restarts < ORCHESTRATOR_MAX_RESTARTS:
                if pr.incident is None:
                    out = self._new_outcome(tier, "ServiceCrash", pr.first_fail)
                    out.strategy_id, out.plan_mode = "liveness-restart", "probe"
                    pr.incident = out.incident_id
                out = self.outcomes[pr.incident - 1]
                out.attempts += 1
                pr.restarts += 1
                pr.restarting = True
                pr.down = 0
                self.app.begin_restart(tier)
                lat = ORCHESTRATOR_RESTART * self.rng.uniform(1 - LATENCY_JITTER, 1 + LATENCY_JITTER)
                self.sim.schedule(EventKind.ACTION_COMPLETE, ("orchestrator", tier), t + lat)

    def _orchestrator_complete(self, tier: str, t: float) -> None:
        pr = self._probe[tier]
        pr.restarting = False
        out = self.outcomes[pr.incident - 1]
        cal = self.cfg.calibration
        had, cleared = self._apply_repair(tier, "RestartService",
                                          lambda f: cal.p_success(f.fault_type.value, "RestartService"))
        out.actions_executed.append(("liveness-restart", "RestartService", t, t, cleared))
        out.finished = True
        if cleared or (not had and self.app.tiers[tier].up):
            out.success = True
            out.t_recovered = t
            out.first_pass_success = out.attempts == 1

    # ------------------------------------------------------------------- end
    def finalize(self) -> None:
        """Close remaining faults' scoring at the end of the run (no state change)."""
        for f in self.chaos.ledger:
            if f.active:
                self.scorer.fault_closed(f)
