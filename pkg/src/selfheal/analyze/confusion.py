"""Detection scoring against the chaos ledger (harness side, never seen by the loop)."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..chaos import REPORT_CLASSES, FaultEvent, report_class_of


@dataclass
class ConfusionCounts:
    tp: dict[str, int] = field(default_factory=lambda: {c: 0 for c in REPORT_CLASSES})
    fp: dict[str, int] = field(default_factory=lambda: {c: 0 for c in REPORT_CLASSES})
    fn: dict[str, int] = field(default_factory=lambda: {c: 0 for c in REPORT_CLASSES})
    tn: int = 0

    def add(self, other: "ConfusionCounts") -> "ConfusionCounts":
        for c in REPORT_CLASSES:
            self.tp[c] += other.tp[c]
            self.fp[c] += other.fp[c]
            self.fn[c] += other.fn[c]
        self.tn += other.tn
        return self

    def as_dict(self) -> dict:
        return {c: {"tp": self.tp[c], "fp": self.fp[c], "fn": self.fn[c]} for c in REPORT_CLASSES}


class DetectionScorer:
    """Streaming multiclass scoring.

    A diagnosis is a TP when a not-yet-credited fault of the same reported class
    is active on the diagnosed tier and the diagnosis falls within
    ``match_window`` seconds of its injection. Repeat detections of a credited
    incident are not scored. Anything else is an FP for the predicted class.
    A fault that closes uncredited is an FN for its own class.
    """

    def __init__(self, match_window: float = 30.0):
        self.match_window = match_window
        self.counts = ConfusionCounts()
        self.credited: set[int] = set()
        self.credit_time: dict[int, float] = {}
        self.closed: set[int] = set()
        self.diagnosis_verdicts: list[tuple[int, str]] = []

    def update_confusion(self, diagnosis, active_faults: list[FaultEvent], t: float) -> ConfusionCounts:
        delta = ConfusionCounts()
        if diagnosis is None:
            if not active_faults:
                delta.tn += 1
            self.counts.add(delta)
            return delta
        rc = report_class_of(diagnosis.fault_class)
        same_class = [
            f for f in active_faults
            if f.target == diagnosis.tier and f.fault_type.report_class == rc
            and f.t_injected <= t <= f.t_injected + self.match_window
        ]
        fresh = [f for f in same_class if f.fault_id not in self.credited]
        if fresh:
            self.credited.add(fresh[0].fault_id)
            self.credit_time[fresh[0].fault_id] = t
            delta.tp[rc] += 1
            verdict = "tp"
        elif same_class:
            verdict = "duplicate"
        else:
            delta.fp[rc] += 1
            verdict = "fp"
        self.diagnosis_verdicts.append((diagnosis.id, verdict))
        self.counts.add(delta)
        return delta

    def fault_closed(self, fault: FaultEvent) -> ConfusionCounts:
        delta = ConfusionCounts()
        if fault.fault_id in self.closed:
            return delta
        self.closed.add(fault.fault_id)
        if fault.fault_id not in self.credited:
            delta.fn[fault.fault_type.report_class] += 1
        self.counts.add(delta)
        return delta


def rescore(diagnoses, ledger: list[FaultEvent], match_window: float = 30.0) -> ConfusionCounts:
    """Brute-force re-scoring of a finished run from its diagnoses and fault ledger."""
    counts = ConfusionCounts()
    credited: set[int] = set()
    for d in sorted(diagnoses, key=lambda d: (d.t_detected, d.id)):
        rc = report_class_of(d.fault_class)
        matched = None
        duplicate = False
        for f in ledger:
            active = f.t_injected <= d.t_detected and (f.t_cleared is None or d.t_detected < f.t_cleared)
            if not active or f.target != d.tier or f.fault_type.report_class != rc:
                continue
            if d.t_detected > f.t_injected + match_window:
                continue
            if f.fault_id in credited:
                duplicate = True
                continue
            matched = f
            break
        if matched is not None:
            credited.add(matched.fault_id)
            counts.tp[rc] += 1
        elif not duplicate:
            counts.fp[rc] += 1
    for f in ledger:
        if f.fault_id not in credited:
            counts.fn[f.fault_type.report_class] += 1
    return counts
