"""Evaluation formulas: detection, recovery, load, feedback and paired statistics.

Percentages keep full precision; rounding happens only when reports are written.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

from scipy import stats

from .chaos import REPORT_CLASSES

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ detection
@dataclass
class ClassMetrics:
    fault_class: str
    precision: float | None
    recall: float | None
    f1: float | None
    flags: list[str] = field(default_factory=list)


def precision(tp: int, fp: int) -> float | None:
    return 100.0 * tp / (tp + fp) if tp + fp > 0 else None


def recall(tp: int, fn: int) -> float | None:
    return 100.0 * tp / (tp + fn) if tp + fn > 0 else None


def f1_score(p: float | None, r: float | None) -> float | None:
    if p is None or r is None:
        return None
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def macro_average(values) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def classification_metrics(counts, classes=REPORT_CLASSES) -> dict:
    """Per-class P/R/F1 (percent) plus macro averages over defined classes."""
    total = sum(counts.tp[c] + counts.fp[c] + counts.fn[c] for c in classes)
    if total == 0:
        raise ValueError("confusion counts are all zero")
    rows = []
    for c in classes:
        tp, fp, fn = counts.tp[c], counts.fp[c], counts.fn[c]
        p, r = precision(tp, fp), recall(tp, fn)
        flags = []
        if p is None:
            flags.append("precision n/a: no predictions")
        if r is None:
            flags.append("recall n/a: no incidents")
        rows.append(ClassMetrics(c, p, r, f1_score(p, r), flags))
    return {
        "per_class": rows,
        "macro": {
            "precision": macro_average(m.precision for m in rows),
            "recall": macro_average(m.recall for m in rows),
            "f1": macro_average(m.f1 for m in rows),
            "excluded": [m.fault_class for m in rows if m.f1 is None],
        },
    }


# ------------------------------------------------------------------- recovery
def ttr(t_detected: float, t_recovered: float | None, success: bool = True) -> float:
    """Time to recovery; defined only for successful outcomes."""
    if not success or t_recovered is None:
        raise ValueError("TTR is undefined for an unsuccessful recovery")
    value = t_recovered - t_detected
    if value < 0:
        raise ValueError(f"recovery at {t_recovered} precedes detection at {t_detected}")
    if value == 0:
        log.warning("degenerate TTR of 0 s (recovered at detection time %.3f)", t_detected)
    return value


def speed_improvement(ttr_manual: float, ttr_auto: float) -> float:
    if ttr_manual <= 0:
        raise ValueError("manual TTR must be > 0")
    return (ttr_manual - ttr_auto) / ttr_manual * 100.0


def rsr(successes) -> float:
    """Recovery success rate from an iterable of booleans or outcome objects."""
    flags = [bool(getattr(s, "success", s)) for s in successes]
    if not flags:
        raise ValueError("recovery success rate needs at least one incident")
    return 100.0 * sum(flags) / len(flags)


# ----------------------------------------------------------------------- load
@dataclass
class LoadMetrics:
    throughput: float  # ok requests per second
    avg_rt: float | None  # ms over ok requests
    error_rate: float  # percent of completed requests that failed
    completed: int
    ok: int


def load_metrics(requests, horizon: float, t0: float = 0.0) -> LoadMetrics:
    """Brute-force pass over a request ledger restricted to completions in [t0, t0+horizon)."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    meter = LoadMeter(t0, t0 + horizon)
    for r in requests:
        meter.observe(r)
    return meter.result()


class LoadMeter:
    """Streaming counterpart of :func:`load_metrics`."""

    def __init__(self, t0: float, t1: float):
        self.t0, self.t1 = t0, t1
        self.completed = 0
        self.ok = 0
        self.rt_sum = 0.0

    def observe(self, req) -> None:
        if req.completion is None or not self.t0 <= req.completion < self.t1:
            return
        self.completed += 1
        if req.status == "ok":
            self.ok += 1
            self.rt_sum += (req.completion - req.arrival) * 1000.0

    def result(self) -> LoadMetrics:
        if self.completed == 0:
            raise ValueError("no requests completed in the horizon")
        return LoadMetrics(
            throughput=self.ok / (self.t1 - self.t0),
            avg_rt=self.rt_sum / self.ok if self.ok else None,
            error_rate=100.0 * (self.completed - self.ok) / self.completed,
            completed=self.completed,
            ok=self.ok,
        )


def ok_in_windows(requests, windows: list[tuple[float, float]]) -> int:
    """Successful completions falling inside any of the half-open windows."""
    windows = sorted(windows)
    n = 0
    for r in requests:
        if r.status != "ok" or r.completion is None:
            continue
        for a, b in windows:
            if a <= r.completion < b:
                n += 1
                break
    return n


def retention(faulted_ok: int, healthy_ok: int) -> float:
    if healthy_ok <= 0:
        raise ValueError("healthy baseline has no successful requests in the window")
    return 100.0 * faulted_ok / healthy_ok


# ------------------------------------------------------------------- feedback
@dataclass
class CyclePoint:
    cycle: int
    decision_accuracy: float
    mean_ttr: float | None
    kb_size: int


def feedback_metrics(curve: list[CyclePoint]) -> dict:
    """Change in decision accuracy, knowledge-base growth and adaptation efficiency."""
    if len(curve) < 2:
        raise ValueError("feedback metrics need at least two cycles")
    cycles = [p.cycle for p in curve]
    if cycles != list(range(1, len(curve) + 1)):
        raise ValueError(f"cycles must be contiguous from 1, got {cycles}")
    first, last = curve[0], curve[-1]
    n = len(curve)
    ae = None
    if first.mean_ttr is not None and last.mean_ttr is not None:
        ae = (first.mean_ttr - last.mean_ttr) / n
    ttr_reduction = None
    if first.mean_ttr and last.mean_ttr is not None:
        ttr_reduction = 100.0 * (first.mean_ttr - last.mean_ttr) / first.mean_ttr
    return {
        "delta_da": last.decision_accuracy - first.decision_accuracy,
        "kbg": last.kb_size - first.kb_size,
        "ae": ae,
        "ttr_reduction_pct": ttr_reduction,
        "cycles": n,
    }


# ----------------------------------------------------------------- statistics
def mean_sd(values) -> tuple[float | None, float | None]:
    vals = list(values)
    if not vals:
        return None, None
    m = sum(vals) / len(vals)
    if len(vals) < 2:
        return m, None
    return m, math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def _ranks(values: list[float]) -> list[float]:
    """1-based average ranks."""
    return stats.rankdata(values, method="average").tolist()


def wilcoxon_signed_rank(diffs, exact_max_n: int = 20) -> tuple[float, float, str]:
    """(W+, two-sided p, method). Zero differences are dropped."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    if n == 0:
        return 0.0, 1.0, "exact"
    ranks = _ranks([abs(x) for x in d])
    w_plus = sum(r for r, x in zip(ranks, d) if x > 0)
    if n <= exact_max_n:
        # ranks may be half-integers under ties; doubled ranks are integers
        doubled = [int(round(2 * r)) for r in ranks]
        total = sum(doubled)
        dist = [0] * (total + 1)
        dist[0] = 1
        for r in doubled:
            for s in range(total, r - 1, -1):
                dist[s] += dist[s - r]
        w2 = int(round(2 * w_plus))
        count = 2 ** n
        lower = sum(dist[: w2 + 1]) / count
        upper = sum(dist[w2:]) / count
        return w_plus, min(1.0, 2.0 * min(lower, upper)), "exact"
    mu = n * (n + 1) / 4.0
    ties = {}
    for r in ranks:
        ties[r] = ties.get(r, 0) + 1
    var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t ** 3 - t for t in ties.values()) / 48.0
    z = (w_plus - mu) / math.sqrt(var) if var > 0 else 0.0
    return w_plus, min(1.0, 2.0 * stats.norm.sf(abs(z))), "normal"


def wilcoxon_enumerated(diffs) -> float:
    """Two-sided exact p by enumerating all sign assignments (reference for small n)."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    if n == 0:
        return 1.0
    ranks = _ranks([abs(x) for x in d])
    w_obs = sum(r for r, x in zip(ranks, d) if x > 0)
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        lo += w <= w_obs + 1e-9
        hi += w >= w_obs - 1e-9
    return min(1.0, 2.0 * min(lo, hi) / 2 ** n)


def paired_t(a, b) -> dict:
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 3:
        raise ValueError("paired comparison needs at least 3 pairs")
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    mean, sd = mean_sd(d)
    if sd == 0:
        if mean == 0:
            return {"n": n, "mean_diff": 0.0, "sd": 0.0, "t": 0.0, "p": 1.0, "cohens_d": 0.0,
                    "degenerate": True}
        inf = math.copysign(math.inf, mean)
        return {"n": n, "mean_diff": mean, "sd": 0.0, "t": inf, "p": 0.0, "cohens_d": inf,
                "degenerate": True}
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), n - 1)
    return {"n": n, "mean_diff": mean, "sd": sd, "t": t, "p": float(p), "cohens_d": mean / sd,
            "degenerate": False}


def compare(sample_a, sample_b) -> dict:
    """Paired t-test, Cohen's d on the differences and the Wilcoxon signed-rank test."""
    res = paired_t(sample_a, sample_b)
    d = [x - y for x, y in zip(sample_a, sample_b)]
    w, wp, method = wilcoxon_signed_rank(d)
    res.update({"wilcoxon_w": w, "wilcoxon_p": wp, "wilcoxon_method": method})
    return res


def holm_bonferroni(pvals) -> list[float]:
    """Holm step-down adjusted p-values, returned in input order."""
    p = list(pvals)
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[i]))
        adjusted[i] = running
    return adjusted
