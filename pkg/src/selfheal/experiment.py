"""Experiment designs: detector training, replications, baselines, feedback cycles and sweeps."""
from __future__ import annotations

import bisect
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analyze.analyzer import NORMAL, DetectorModels
from .analyze.confusion import ConfusionCounts
from .analyze.dtree import fit_dtree
from .analyze.iforest import fit_iforest
from .analyze.kmeans import cluster_purity, fit_kmeans
from .chaos import RECOVERY_CLASSES, Chaos, FaultEvent, FaultType, catalog, schedule_campaign
from .config import ExperimentConfig
from .engine import EventKind, RngStream, SimEvent, Simulation
from .execute import Mode, RecoveryOutcome
from .loop import Controller, LoopConfig
from .metrics import (
    CyclePoint, classification_metrics, compare, feedback_metrics, holm_bonferroni, load_metrics,
    mean_sd, retention, rsr, speed_improvement,
)
from .monitor import Monitor
from .plan import KnowledgeBase
from .webapp import OK, TIERS, WebApp, WorkloadConfig

log = logging.getLogger(__name__)

TRAIN_SEED_OFFSET = 1_000_000
KB_WARMUP_SEED_OFFSET = 2_000_000
TRAIN_GAP = 15.0
INJECT_OFFSET = 0.5
TAIL = 10.0
BASELINE_MODES = (Mode.MANUAL, Mode.RULE_ONLY, Mode.ORCHESTRATOR, Mode.AUTOFIX)


# ------------------------------------------------------------------ schedules
def sequential_schedule(cfg: ExperimentConfig) -> tuple[list[tuple[float, int]], float]:
    """Scenarios one after another with healthy gaps; returns (plan, end time)."""
    by_id = {s.id: s for s in catalog()}
    t = cfg.warmup
    plan = []
    for sid in cfg.scenarios:
        plan.append((t + INJECT_OFFSET, sid))
        t += by_id[sid].duration + cfg.gap
    return plan, t + TAIL


def fault_windows(plan: list[tuple[float, int]]) -> list[tuple[float, float]]:
    by_id = {s.id: s for s in catalog()}
    return [(t, t + by_id[sid].duration) for t, sid in plan]


# ------------------------------------------------------------------ one run
@dataclass
class RunResult:
    seed: int
    mode: str
    end: float
    plan: list[tuple[float, int]]
    incidents: list[RecoveryOutcome]
    faults: list[FaultEvent]
    fault_outcomes: list[dict]
    counts: ConfusionCounts
    diagnoses: list
    ok_times: list[float]
    completed: int
    failed: int
    rt_sum_ok: float
    kb: KnowledgeBase | None
    digest: str
    extra: dict = field(default_factory=dict)

    def ok_in(self, windows) -> int:
        return sum(bisect.bisect_left(self.ok_times, b) - bisect.bisect_left(self.ok_times, a)
                   for a, b in windows)


def _workload(cfg: ExperimentConfig, users: int | None) -> WorkloadConfig:
    w = cfg.workload
    return WorkloadConfig(users if users is not None else w.users, w.think_time, dict(w.op_mix),
                          w.request_timeout)


def simulate(cfg: ExperimentConfig, mode: Mode, seed: int, plan: list[tuple[float, int]], end: float,
             models: DetectorModels | None = None, kb: KnowledgeBase | None = None,
             eps: float | None = None, feedback: bool | None = None, threshold: float | None = None,
             users: int | None = None, hooks=None) -> RunResult:
    """Run one seeded simulation of ``mode`` with the given injection plan."""
    sim = Simulation(seed)
    app = WebApp(sim)
    chaos = Chaos(sim, app)
    monitor = Monitor(TIERS)
    feedback = cfg.plan.feedback if feedback is None else feedback
    lc = LoopConfig(
        mode=mode,
        threshold=cfg.detection.threshold if threshold is None else threshold,
        eps=cfg.plan.eps if eps is None else eps,
        feedback=feedback,
        match_window=cfg.detection.match_window,
        baseline_to=cfg.warmup,
        calibration=cfg.calibration,
    )
    if kb is None:
        kb = KnowledgeBase(learning=feedback)
    ctl = Controller(sim, app, chaos, monitor, models, kb, lc)
    for hook in hooks or ():
        ctl.tick_hooks.append(hook(ctl))
    by_id = {s.id: s for s in catalog()}

    def on_inject(ev: SimEvent) -> None:
        fe = chaos.inject(ev.payload)
        sim.schedule(EventKind.FAULT_CLEAR, fe.fault_id, sim.clock + by_id[ev.payload].duration)

    def on_clear(ev: SimEvent) -> None:
        if chaos.ledger[ev.payload - 1].active:
            chaos.clear(ev.payload, cleared_by="expiry")

    sim.on(EventKind.FAULT_INJECT, on_inject)
    sim.on(EventKind.FAULT_CLEAR, on_clear)
    app.start_workload(_workload(cfg, users))
    for t, sid in plan:
        sim.schedule(EventKind.FAULT_INJECT, sid, t)
    ctl.start(end)
    sim.run_until(end)
    ctl.finalize()

    ok_times = []
    completed = failed = 0
    rt_sum = 0.0
    for r in app.ledger:
        if r.completion is None or r.completion < cfg.warmup:
            continue
        completed += 1
        if r.status == OK:
            ok_times.append(r.completion)
            rt_sum += (r.completion - r.arrival) * 1000.0
        else:
            failed += 1
    ok_times.sort()
    result = RunResult(
        seed=seed, mode=mode.value, end=end, plan=list(plan), incidents=ctl.outcomes,
        faults=list(chaos.ledger), fault_outcomes=per_fault_outcomes(chaos.ledger, ctl.outcomes, mode,
                                                                 ctl.scorer.credit_time),
        counts=ctl.scorer.counts, diagnoses=list(ctl.analyzer.history), ok_times=ok_times,
        completed=completed, failed=failed, rt_sum_ok=rt_sum, kb=ctl.kb, digest=sim.trace_digest(),
    )
    result.extra["controller"] = ctl
    return result


def per_fault_outcomes(ledger: list[FaultEvent], incidents: list[RecoveryOutcome], mode: Mode,
                       credit_time: dict[int, float] | None = None) -> list[dict]:
    """One row per injected fault. Detection falls back to the scorer's credit
    time for faults that never opened an incident (for example under NoHeal)."""
    credit_time = credit_time or {}
    rows = []
    for f in ledger:
        linked = [o for o in incidents if o.fault_id == f.fault_id]
        t_det = min((o.t_detected for o in linked), default=credit_time.get(f.fault_id))
        winner = next((o for o in linked if o.success and o.t_recovered is not None), None)
        success = winner is not None and f.cleared_by == "action"
        first = linked[0] if linked else None
        rows.append({
            "fault_id": f.fault_id,
            "scenario_id": f.scenario_id,
            "fault_type": f.fault_type.value,
            "class": f.fault_type.recovery_class,
            "report_class": f.fault_type.report_class,
            "mode": mode.value,
            "strategy": first.strategy_id if first else None,
            "success": success,
            "t_injected": f.t_injected,
            "t_detected": t_det,
            "t_recovered": winner.t_recovered if success else None,
            "ttr": winner.t_recovered - t_det if success else None,
            "attempts": sum(o.attempts for o in linked),
            "correct_decision": bool(first and success and first.first_pass_success),
            "detected": t_det is not None,
            "acted": first is not None,
        })
    return rows


# ---------------------------------------------------------------- detectors
_MODEL_CACHE: dict[tuple, DetectorModels] = {}
_HEALTHY_CACHE: dict[tuple, RunResult] = {}


def _collect_features(store: list, labeled: bool):
    def factory(ctl: Controller):
        def hook(t: float) -> None:
            if not ctl.monitor.has_history(TIERS[0], now=t):
                return
            for tier in TIERS:
                fv = ctl.monitor.feature_vector(tier, t)
                label = NORMAL
                if labeled:
                    f = ctl.chaos.active_on(tier)
                    if f is not None:
                        label = f.fault_type.diagnosis_class
                store.append((tier, fv, label))
        return hook
    return factory


def train_detectors(cfg: ExperimentConfig, seed: int | None = None) -> DetectorModels:
    """Fit per-tier isolation forests on a healthy run and one decision tree on labeled runs.

    Training seeds are offset so they never coincide with evaluation seeds.
    """
    seed = cfg.seed if seed is None else seed
    d = cfg.detection
    key = (seed, d.n_trees, d.subsample, d.max_depth, d.min_leaf, d.training_runs,
           d.training_duration, d.healthy_training_duration, d.kmeans_k, cfg.warmup,
           cfg.workload.users, cfg.workload.think_time)
    if key in _MODEL_CACHE:
        return _MODEL_CACHE[key]
    base = seed + TRAIN_SEED_OFFSET
    healthy: list = []
    simulate(cfg, Mode.NO_HEAL, base, [], cfg.warmup + d.healthy_training_duration,
             hooks=[_collect_features(healthy, labeled=False)])
    rng = RngStream("detectors", base)
    iforests = {}
    for tier in TIERS:
        rows = np.array([fv for t, fv, _ in healthy if t == tier])
        iforests[tier] = fit_iforest(rows, d.n_trees, min(d.subsample, len(rows)), rng)

    labeled: list = list(healthy)
    scenarios = catalog()
    for i in range(d.training_runs):
        sc = scenarios[i % len(scenarios)]
        plan, t = [], cfg.warmup + INJECT_OFFSET
        while t + sc.duration <= d.training_duration:
            plan.append((t, sc.id))
            t += sc.duration + TRAIN_GAP
        simulate(cfg, Mode.NO_HEAL, base + 1 + i, plan, d.training_duration,
                 hooks=[_collect_features(labeled, labeled=True)])
    x = np.array([fv for _, fv, _ in labeled])
    y = [lab for _, _, lab in labeled]
    dtree = fit_dtree(x, y, d.max_depth, d.min_leaf)
    counts: dict[str, int] = {}
    for lab in y:
        counts[lab] = counts.get(lab, 0) + 1
    mu, sd = x.mean(axis=0), x.std(axis=0)
    z = (x - mu) / np.where(sd > 0, sd, 1.0)
    km = fit_kmeans(z, min(d.kmeans_k, len(z)), RngStream("detectors", base + 7))
    models = DetectorModels(iforests, dtree, len(y), counts, cluster_purity(km.labels, y))
    _MODEL_CACHE[key] = models
    log.info("trained detectors on %d windows (seed %d)", len(y), base)
    return models


def healthy_run(cfg: ExperimentConfig, seed: int, end: float, users: int | None = None) -> RunResult:
    """Fault-free reference run; only the workload and telemetry windows are simulated
    since nothing downstream of telemetry can alter a healthy system."""
    key = (seed, end, users if users is not None else cfg.workload.users, cfg.workload.think_time,
           cfg.warmup)
    if key not in _HEALTHY_CACHE:
        sim = Simulation(seed)
        app = WebApp(sim)

        def tick(ev: SimEvent) -> None:
            app.sample_telemetry()
            if sim.clock + 1.0 <= end + 1e-9:
                sim.schedule(EventKind.TELEMETRY_TICK, None, sim.clock + 1.0)

        sim.on(EventKind.TELEMETRY_TICK, tick)
        app.start_workload(_workload(cfg, users))
        sim.schedule(EventKind.TELEMETRY_TICK, None, 1.0)
        sim.run_until(end)
        ok = sorted(r.completion for r in app.ledger
                    if r.status == OK and r.completion is not None and r.completion >= cfg.warmup)
        done = [r for r in app.ledger if r.completion is not None and r.completion >= cfg.warmup]
        rt = sum((r.completion - r.arrival) * 1000.0 for r in done if r.status == OK)
        _HEALTHY_CACHE[key] = RunResult(seed, "healthy", end, [], [], [], [], ConfusionCounts(), [], ok,
                                        len(done), len(done) - len(ok), rt, None, sim.trace_digest())
    return _HEALTHY_CACHE[key]


def clear_caches() -> None:
    _MODEL_CACHE.clear()
    _HEALTHY_CACHE.clear()


def warm_kb(cfg: ExperimentConfig, models: DetectorModels, runs: int = 2) -> KnowledgeBase:
    """Knowledge accumulated by AutoFix over ``runs`` passes on held-out seeds."""
    kb = KnowledgeBase(learning=True)
    plan, end = sequential_schedule(cfg)
    eps = cfg.plan.eps
    for i in range(runs):
        simulate(cfg, Mode.AUTOFIX, cfg.seed + KB_WARMUP_SEED_OFFSET + i, plan, end, models, kb, eps=eps)
        eps *= cfg.plan.eps_decay
    return kb


# ----------------------------------------------------------------- summaries
def run_summary(res: RunResult, healthy: RunResult, windows) -> dict:
    rows = res.fault_outcomes
    ttrs = [r["ttr"] for r in rows if r["success"]]
    horizon = res.end - (res.plan[0][0] - INJECT_OFFSET if res.plan else 0.0)
    faulted_ok, healthy_ok = res.ok_in(windows), healthy.ok_in(windows)
    return {
        "seed": res.seed,
        "mode": res.mode,
        "incidents": len(rows),
        "mean_ttr": mean_sd(ttrs)[0],
        "rsr": rsr(r["success"] for r in rows) if rows else None,
        "retention": retention(faulted_ok, healthy_ok) if windows and healthy_ok else 100.0,
        "throughput": len(res.ok_times) / horizon if horizon > 0 else None,
        "avg_rt": res.rt_sum_ok / len(res.ok_times) if res.ok_times else None,
        "error_rate": 100.0 * res.failed / res.completed if res.completed else None,
        "decision_accuracy": _decision_accuracy(rows),
        "kb_size": res.kb.kb_size() if res.kb is not None else 0,
    }


def _decision_accuracy(rows) -> float | None:
    acted = [r for r in rows if r["acted"]]
    if not acted:
        return None
    return 100.0 * sum(r["correct_decision"] for r in acted) / len(acted)


def recovery_rows(mode_rows: dict[str, list[list[dict]]]) -> list[dict]:
    """Per recovery class x mode: TTR mean/sd across replications and success rate."""
    table = []
    per_mode_class: dict[tuple[str, str], dict] = {}
    for mode, reps in mode_rows.items():
        for cls in RECOVERY_CLASSES + ("Average",):
            rep_ttr, rep_rsr, pooled = [], [], []
            for rows in reps:
                sel = rows if cls == "Average" else [r for r in rows if r["class"] == cls]
                if not sel:
                    continue
                ttrs = [r["ttr"] for r in sel if r["success"]]
                pooled.extend(ttrs)
                if cls == "Average":
                    class_means = [mean_sd(r["ttr"] for r in rows if r["class"] == c and r["success"])[0]
                                   for c in RECOVERY_CLASSES]
                    class_means = [m for m in class_means if m is not None]
                    if class_means:
                        rep_ttr.append(sum(class_means) / len(class_means))
                    class_rsr = [rsr(r["success"] for r in rows if r["class"] == c)
                                 for c in RECOVERY_CLASSES if any(r["class"] == c for r in rows)]
                    rep_rsr.append(sum(class_rsr) / len(class_rsr))
                else:
                    if ttrs:
                        rep_ttr.append(sum(ttrs) / len(ttrs))
                    rep_rsr.append(rsr(r["success"] for r in sel))
            m_ttr, sd_ttr = mean_sd(rep_ttr)
            per_mode_class[(mode, cls)] = {
                "class": cls, "mode": mode, "mean_ttr_s": m_ttr, "sd_ttr_s": sd_ttr,
                "success_rate_pct": mean_sd(rep_rsr)[0], "n": len(rep_rsr),
                "pooled_mean_ttr_s": mean_sd(pooled)[0], "speed_improvement_pct": None,
            }
    for (mode, cls), row in per_mode_class.items():
        manual = per_mode_class.get((Mode.MANUAL.value, cls))
        if mode != Mode.MANUAL.value and manual and manual["mean_ttr_s"] and row["mean_ttr_s"] is not None:
            row["speed_improvement_pct"] = speed_improvement(manual["mean_ttr_s"], row["mean_ttr_s"])
        table.append(row)
    return table


def _detection_block(counts: ConfusionCounts) -> dict:
    cm = classification_metrics(counts)
    return {
        "per_class": [{"class": m.fault_class, "precision": m.precision, "recall": m.recall, "f1": m.f1,
                       "flags": m.flags} for m in cm["per_class"]],
        "macro": cm["macro"],
        "counts": counts.as_dict(),
    }


def digest_of(report: dict) -> str:
    body = {k: v for k, v in report.items() if k != "digest"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()


# --------------------------------------------------------------- experiments
def run_experiment(cfg: ExperimentConfig) -> dict:
    """Replicated evaluation of ``cfg.mode`` with paired manual runs on identical seeds."""
    mode = cfg.mode_enum
    models = train_detectors(cfg)
    plan, end = sequential_schedule(cfg)
    windows = fault_windows(plan)
    kb = warm_kb(cfg, models) if mode is Mode.AUTOFIX and cfg.plan.feedback else None
    eps = cfg.plan.eps
    counts = ConfusionCounts()
    mode_rows: dict[str, list] = {mode.value: [], Mode.MANUAL.value: []}
    summaries, outcomes, digests = [], [], []
    for r in range(cfg.replications):
        seed = cfg.seed + r
        rep_kb = kb if (kb is not None and cfg.plan.carry_kb) else (
            _clone_kb(kb) if kb is not None else None)
        res = simulate(cfg, mode, seed, plan, end, models, rep_kb, eps=eps)
        if cfg.plan.carry_kb:
            kb = res.kb if mode is Mode.AUTOFIX else kb
            eps *= cfg.plan.eps_decay
        counts.add(res.counts)
        healthy = healthy_run(cfg, seed, end)
        mode_rows[mode.value].append(res.fault_outcomes)
        summaries.append(run_summary(res, healthy, windows))
        outcomes.extend(res.fault_outcomes)
        digests.append(res.digest)
        if mode is not Mode.MANUAL:
            man = simulate(cfg, Mode.MANUAL, seed, plan, end, models)
            mode_rows[Mode.MANUAL.value].append(man.fault_outcomes)
            outcomes.extend(man.fault_outcomes)
    report = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "seeds": [cfg.seed + r for r in range(cfg.replications)],
        "detection": _detection_block(counts),
        "recovery": recovery_rows(mode_rows),
        "load": _aggregate_load(summaries),
        "replications": summaries,
        "outcomes": outcomes,
        "knowledge_base": kb.export_json() if kb is not None else [],
        "models": models.summary(),
        "trace_digests": digests,
    }
    report["digest"] = digest_of(report)
    return report


def _clone_kb(kb: KnowledgeBase) -> KnowledgeBase:
    c = KnowledgeBase(kb.rules, kb.learning)
    c.import_json(kb.export_json())
    return c


def _aggregate_load(summaries: list[dict]) -> dict:
    out = {}
    for key in ("throughput", "avg_rt", "error_rate", "retention", "mean_ttr", "rsr"):
        vals = [s[key] for s in summaries if s[key] is not None]
        m, sd = mean_sd(vals)
        out[key] = {"mean": m, "sd": sd, "n": len(vals)}
    return out


def run_baseline_matrix(cfg: ExperimentConfig, seeds: list[int] | None = None) -> dict:
    """Every healing mode on identical seeds and scenarios, plus NoHeal for reference."""
    seeds = seeds if seeds is not None else [cfg.seed + k for k in range(cfg.baseline_seeds)]
    models = train_detectors(cfg)
    plan, end = sequential_schedule(cfg)
    windows = fault_windows(plan)
    kb0 = warm_kb(cfg, models) if cfg.plan.feedback else None
    per_seed: dict[str, list[dict]] = {m.value: [] for m in BASELINE_MODES + (Mode.NO_HEAL,)}
    for seed in seeds:
        healthy = healthy_run(cfg, seed, end)
        for mode in BASELINE_MODES + (Mode.NO_HEAL,):
            kb = _clone_kb(kb0) if (mode is Mode.AUTOFIX and kb0 is not None) else None
            eps = cfg.plan.eps * cfg.plan.eps_decay ** 2 if kb is not None else cfg.plan.eps
            res = simulate(cfg, mode, seed, plan, end, models if mode is not Mode.RULE_ONLY else None,
                           kb, eps=eps)
            per_seed[mode.value].append(run_summary(res, healthy, windows))
    table = []
    for mode, rows in per_seed.items():
        ttr_m, ttr_sd = mean_sd([r["mean_ttr"] for r in rows if r["mean_ttr"] is not None])
        table.append({
            "mode": mode,
            "mean_ttr_s": ttr_m,
            "sd_ttr_s": ttr_sd,
            "success_pct": mean_sd([r["rsr"] for r in rows if r["rsr"] is not None])[0],
            "throughput_retention_pct": mean_sd([r["retention"] for r in rows])[0],
        })
    ordered = [m.value for m in BASELINE_MODES]
    ttr_ok = ret_ok = 0
    for i in range(len(seeds)):
        ttrs = [per_seed[m][i]["mean_ttr"] for m in ordered]
        rets = [per_seed[m][i]["retention"] for m in ordered]
        if all(a is not None and b is not None and a > b for a, b in zip(ttrs, ttrs[1:])):
            ttr_ok += 1
        if all(a < b for a, b in zip(rets, rets[1:])):
            ret_ok += 1
    stats_block = _paired_stats(per_seed, "mean_ttr")
    stats_block.update({"retention": _paired_stats(per_seed, "retention")["comparisons"]})
    report = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "seeds": seeds,
        "baselines": table,
        "per_seed": per_seed,
        "ordering": {"ttr_ordered_seeds": ttr_ok, "retention_ordered_seeds": ret_ok, "n_seeds": len(seeds)},
        "statistics": stats_block,
    }
    report["digest"] = digest_of(report)
    return report


def _paired_stats(per_seed: dict[str, list[dict]], key: str) -> dict:
    auto = per_seed[Mode.AUTOFIX.value]
    comps = []
    for mode in (Mode.MANUAL, Mode.RULE_ONLY, Mode.ORCHESTRATOR):
        other = per_seed[mode.value]
        pairs = [(o[key], a[key]) for o, a in zip(other, auto) if o[key] is not None and a[key] is not None]
        if len(pairs) < 3:
            comps.append({"versus": mode.value, "metric": key, "n": len(pairs), "note": "too few pairs"})
            continue
        res = compare([p[0] for p in pairs], [p[1] for p in pairs])
        res.update({"versus": mode.value, "metric": key})
        comps.append(res)
    valid = [c for c in comps if "p" in c]
    for c, adj in zip(valid, holm_bonferroni([c["p"] for c in valid])):
        c["p_holm"] = adj
    return {"comparisons": comps, "note": "AutoFix vs each baseline, paired by seed; Holm-adjusted"}


def run_feedback_study(cfg: ExperimentConfig, cycles: int | None = None, mode: Mode = Mode.AUTOFIX,
                       feedback: bool = True, seeds: list[int] | None = None) -> dict:
    """Knowledge persists across cycles; each cycle replays the suite on a fresh seed."""
    cycles = cfg.feedback_cycles if cycles is None else cycles
    if cycles < 2:
        raise ValueError("the feedback study needs at least two cycles")
    if mode not in (Mode.AUTOFIX, Mode.RULE_ONLY):
        raise ValueError(f"feedback study is defined for AutoFix (and the RuleOnly ablation), not {mode.value}")
    seeds = seeds if seeds is not None else [cfg.seed + k for k in range(cfg.feedback_chains)]
    models = train_detectors(cfg) if mode is Mode.AUTOFIX else None
    plan, end = sequential_schedule(cfg)
    per_cycle: dict[int, list[dict]] = {c: [] for c in range(1, cycles + 1)}
    for chain, seed in enumerate(seeds):
        kb = KnowledgeBase(learning=feedback and mode is Mode.AUTOFIX)
        eps = cfg.plan.eps
        for c in range(1, cycles + 1):
            run_seed = seed + 100 * (c - 1) + 10_000
            res = simulate(cfg, mode, run_seed, plan, end, models, kb, eps=eps, feedback=feedback)
            kb = res.kb if mode is Mode.AUTOFIX else kb
            eps *= cfg.plan.eps_decay
            per_cycle[c].extend(res.fault_outcomes)
            per_cycle[c].append({"_kb_size": kb.kb_size()})
    curve = []
    for c in range(1, cycles + 1):
        rows = [r for r in per_cycle[c] if "_kb_size" not in r]
        kb_sizes = [r["_kb_size"] for r in per_cycle[c] if "_kb_size" in r]
        ttrs = [r["ttr"] for r in rows if r["success"]]
        curve.append(CyclePoint(c, _decision_accuracy(rows) or 0.0, mean_sd(ttrs)[0],
                                round(sum(kb_sizes) / len(kb_sizes))))
    fm = feedback_metrics(curve)
    report = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "seeds": seeds,
        "mode": mode.value,
        "feedback_enabled": feedback,
        "feedback": [{"cycle": p.cycle, "decision_accuracy_pct": p.decision_accuracy,
                      "mean_ttr_s": p.mean_ttr, "kb_size": p.kb_size} for p in curve],
        "feedback_metrics": fm,
        "mean_ttr_all_cycles": mean_sd([r["ttr"] for c in per_cycle for r in per_cycle[c]
                                        if "_kb_size" not in r and r["success"]])[0],
    }
    report["digest"] = digest_of(report)
    return report


def campaign_plan(cfg: ExperimentConfig, rate: float, seed: int) -> tuple[list[tuple[float, int]], float]:
    duration = cfg.sweeps.campaign_duration
    mix = {sid: 1.0 for sid in cfg.scenarios}
    stream = RngStream("faults", seed + 3_000_000)
    offsets = schedule_campaign(rate, duration, mix, stream)
    plan = [(cfg.warmup + INJECT_OFFSET + off, sid) for off, sid in offsets]
    return plan, cfg.warmup + duration + TAIL


def run_sweeps(cfg: ExperimentConfig, which: tuple[str, ...] = ("threshold", "load", "fault_rate")) -> dict:
    models = train_detectors(cfg)
    report: dict = {"config": cfg.to_dict(), "seed": cfg.seed}
    plan, end = sequential_schedule(cfg)
    windows = fault_windows(plan)
    if "threshold" in which:
        series = []
        for th in cfg.sweeps.thresholds:
            res = simulate(cfg, Mode.NO_HEAL, cfg.seed, plan, end, models, threshold=th)
            fp = sum(res.counts.fp.values())
            fn = sum(res.counts.fn.values())
            tp = sum(res.counts.tp.values())
            series.append({"threshold": th, "tp": tp, "fp": fp, "fn": fn,
                           "macro_f1": classification_metrics(res.counts)["macro"]["f1"],
                           "trace_digest": res.digest})
        report["threshold_series"] = series
    if "load" in which:
        series = []
        kb = warm_kb(cfg, models) if cfg.plan.feedback else None
        for users in cfg.sweeps.users:
            healthy = healthy_run(cfg, cfg.seed, end, users)
            res = simulate(cfg, Mode.AUTOFIX, cfg.seed, plan, end, models,
                           _clone_kb(kb) if kb is not None else None, users=users)
            s = run_summary(res, healthy, windows)
            hs = run_summary(healthy, healthy, [])
            series.append({"users": users, "throughput": s["throughput"], "avg_rt_ms": s["avg_rt"],
                           "error_rate_pct": s["error_rate"], "retention_pct": s["retention"],
                           "healthy_throughput": hs["throughput"], "healthy_avg_rt_ms": hs["avg_rt"]})
        report["load_series"] = series
    if "fault_rate" in which:
        series = []
        kb = warm_kb(cfg, models) if cfg.plan.feedback else None
        for rate in cfg.sweeps.fault_rates:
            cplan, cend = campaign_plan(cfg, rate, cfg.seed)
            healthy = healthy_run(cfg, cfg.seed, cend)
            span = [(cfg.warmup, cfg.warmup + cfg.sweeps.campaign_duration)]
            for mname in cfg.sweeps.modes:
                mode = Mode.parse(mname)
                mkb = _clone_kb(kb) if (mode is Mode.AUTOFIX and kb is not None) else None
                res = simulate(cfg, mode, cfg.seed, cplan, cend,
                               models if mode is not Mode.RULE_ONLY else None, mkb)
                series.append({"fault_rate_per_min": rate, "mode": mode.value,
                               "retention_pct": retention(res.ok_in(span), healthy.ok_in(span)),
                               "faults": len(cplan)})
        report["throughput_series"] = series
    report["digest"] = digest_of(report)
    return report


def load_check(requests, horizon, t0=0.0):
    """Thin re-export used by tests comparing streaming and brute-force load metrics."""
    return load_metrics(requests, horizon, t0)
