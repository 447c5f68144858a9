"""Anomaly gate plus fault-class diagnosis.

A tier is gated when its isolation-forest score reaches the threshold or any
deterministic signature fires. Signatures win; otherwise the decision tree
names the class and confidence is leaf purity times the anomaly score.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..chaos import CPU_OVERLOAD, DB_TIMEOUT, HTTP_500, LOGIC_ERROR, MEMORY_LEAK, SERVICE_CRASH
from ..monitor import FEATURE_NAMES, LEAK_SLOPE_WINDOW, InsufficientHistory, Monitor
from .dtree import DecisionTreeModel, classify
from .iforest import IsolationForestModel, iforest_score

NORMAL = "normal"
SIGNATURE_ORDER = (SERVICE_CRASH, DB_TIMEOUT, LOGIC_ERROR, HTTP_500, MEMORY_LEAK, CPU_OVERLOAD)

RATE_WINDOW = 2.0
CPU_WINDOW = 3.0
HTTP500_RATE = 0.05
DB_CODE_RATE = 0.02
CPU_MEAN = 0.9
LEAK_MIN_SLOPE = 1e-6  # MB/s; guards float noise on a flat series


@dataclass
class Diagnosis:
    id: int
    fault_class: str
    confidence: float
    t_detected: float
    source: str  # signature | classifier
    tier: str
    score: float = 0.0
    candidates: tuple[str, ...] = ()


@dataclass
class DetectorModels:
    iforests: dict[str, IsolationForestModel]
    dtree: DecisionTreeModel
    training_windows: int = 0
    label_counts: dict[str, int] = field(default_factory=dict)
    kmeans_purity: float | None = None

    def summary(self) -> dict:
        return {
            "feature_names": list(FEATURE_NAMES),
            "iforest": {tier: m.summary() for tier, m in sorted(self.iforests.items())},
            "decision_tree": self.dtree.summary(),
            "training_windows": self.training_windows,
            "label_counts": dict(sorted(self.label_counts.items())),
            "kmeans_purity": self.kmeans_purity,
        }


def rule_signatures(monitor: Monitor, tier: str, now: float | None = None) -> list[str]:
    """Classes whose deterministic signature fires for ``tier``, in precedence order."""
    fired = set()
    latest = monitor.samples(tier, 1.0, now)
    if latest and not any(s.available for s in latest):
        fired.add(SERVICE_CRASH)
    codes, requests = monitor.code_counts(tier, RATE_WINDOW, now)
    if requests:
        if codes["HTTP-500"] / requests > HTTP500_RATE:
            fired.add(HTTP_500)
        if (codes["DB-TIMEOUT"] + codes["CONN-REFUSED"]) / requests > DB_CODE_RATE:
            fired.add(DB_TIMEOUT)
    if codes["LOGIC-ERR"] or codes["DEADLOCK"]:
        fired.add(LOGIC_ERROR)
    cpu = monitor.window("cpu_util", tier, CPU_WINDOW, now)
    if cpu.count >= 3 and cpu.mean > CPU_MEAN:
        fired.add(CPU_OVERLOAD)
    mem_long = monitor.window("mem_used", tier, LEAK_SLOPE_WINDOW, now)
    if mem_long.count >= 3 and mem_long.slope > LEAK_MIN_SLOPE:
        mem_short = monitor.window("mem_used", tier, 10.0, now)
        rt = monitor.window("mean_rt", tier, 10.0, now)
        if mem_short.slope and mem_short.slope > LEAK_MIN_SLOPE and rt.count >= 3 and rt.slope > 0:
            fired.add(MEMORY_LEAK)
    return [c for c in SIGNATURE_ORDER if c in fired]


class Analyzer:
    """Per-tick diagnosis with per-(tier, class) debounce.

    The control loop may additionally hold a tier (remediation in flight) or
    set a quiet period after it closes an incident.
    """

    def __init__(self, monitor: Monitor, models: DetectorModels | None, threshold: float = 0.85,
                 use_ml: bool = True):
        if use_ml and models is None:
            raise ValueError("ML gating needs trained detector models")
        self.monitor = monitor
        self.models = models
        self.threshold = threshold
        self.use_ml = use_ml
        self.open: dict[tuple[str, str], Diagnosis] = {}
        self.held: set[str] = set()
        self.quiet_until: dict[str, float] = {}
        self.history: list[Diagnosis] = []
        self.last_scores: dict[str, float] = {}

    def evaluate(self, tier: str, now: float) -> tuple[list[str], float | None, list[float] | None]:
        sigs = rule_signatures(self.monitor, tier, now)
        score = fv = None
        if self.use_ml and self.monitor.has_history(tier, now=now):
            try:
                fv = self.monitor.feature_vector(tier, now)
            except InsufficientHistory:
                fv = None
            if fv is not None:
                score = iforest_score(self.models.iforests[tier], fv)
                self.last_scores[tier] = score
        return sigs, score, fv

    def diagnose_tier(self, tier: str, now: float) -> Diagnosis | None:
        if tier in self.held or now < self.quiet_until.get(tier, float("-inf")):
            return None
        sigs, score, fv = self.evaluate(tier, now)
        gated = bool(sigs) or (score is not None and score >= self.threshold)
        if not gated:
            return None
        if sigs:
            cls, conf, source = sigs[0], 1.0, "signature"
        else:
            cls, purity = classify(self.models.dtree, fv)
            if cls == NORMAL:
                return None
            conf, source = purity * score, "classifier"
        if (tier, cls) in self.open:
            return None
        diag = Diagnosis(len(self.history) + 1, cls, min(1.0, max(0.0, conf)), now, source, tier,
                         score if score is not None else 0.0, tuple(sigs))
        self.open[(tier, cls)] = diag
        self.history.append(diag)
        return diag

    def diagnose(self, now: float, tiers) -> list[Diagnosis]:
        out = []
        for tier in tiers:
            d = self.diagnose_tier(tier, now)
            if d is not None:
                out.append(d)
        return out

    def resolve(self, diag: Diagnosis, now: float, quiet: float = 0.0) -> None:
        self.open.pop((diag.tier, diag.fault_class), None)
        if quiet > 0:
            self.quiet_until[diag.tier] = max(self.quiet_until.get(diag.tier, 0.0), now + quiet)

    def resolve_tier(self, tier: str, now: float, quiet: float = 0.0) -> list[Diagnosis]:
        closed = [d for (t, _), d in self.open.items() if t == tier]
        for d in closed:
            self.resolve(d, now, quiet)
        return closed

    def open_on(self, tier: str) -> list[Diagnosis]:
        return [d for (t, _), d in self.open.items() if t == tier]
