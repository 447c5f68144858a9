"""Telemetry/log store with sliding-window statistics and diagnosis features."""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass

from .webapp import LOG_CODES, LogEvent, TelemetrySample

METRICS = ("cpu_util", "mem_used", "mean_rt", "p95_rt", "request_count",
           "error_count", "queue_len", "available")

FEATURE_NAMES = (
    "cpu_mean", "cpu_max", "mem_slope", "mean_rt", "p95_rt", "error_rate",
    "http500_rate", "db_timeout_rate", "queue_mean", "availability",
)
FEATURE_WINDOW = 10.0
LEAK_SLOPE_WINDOW = 60.0
MIN_HISTORY = 30.0
_EPS = 1e-9


class OutOfOrderError(ValueError):
    pass


class InsufficientHistory(LookupError):
    pass


@dataclass(frozen=True)
class WindowStats:
    metric: str
    tier: str
    duration: float
    count: int
    mean: float | None = None
    max: float | None = None
    p95: float | None = None
    slope: float | None = None

    @property
    def empty(self) -> bool:
        return self.count == 0


def nearest_rank(values: list[float], q: float) -> float:
    s = sorted(values)
    return s[max(0, math.ceil(q * len(s)) - 1)]


def ls_slope(ts: list[float], ys: list[float]) -> float:
    n = len(ts)
    if n < 2:
        return 0.0
    tm = sum(ts) / n
    ym = sum(ys) / n
    den = sum((t - tm) ** 2 for t in ts)
    if den == 0:
        return 0.0
    return sum((t - tm) * (y - ym) for t, y in zip(ts, ys)) / den


def sample_value(s: TelemetrySample, metric: str) -> float | None:
    v = getattr(s, metric)
    if metric == "available":
        return 1.0 if v else 0.0
    return v


class Monitor:
    """Bounded per-tier buffers of samples and logs.

    Each stored sample carries the log-code counts that arrived in its window so
    code rates over a window are a sum over samples rather than a log scan.
    """

    def __init__(self, tiers, retention: float = 300.0):
        self.retention = retention
        self._samples: dict[str, deque[tuple[TelemetrySample, Counter]]] = {t: deque() for t in tiers}
        self._logs: dict[str, deque[LogEvent]] = {t: deque() for t in tiers}
        self._pending_codes: dict[str, Counter] = {t: Counter() for t in tiers}
        self._first_t: dict[str, float] = {}
        self._last_log_t: dict[str, float] = {}
        self.now = 0.0

    # ------------------------------------------------------------------ ingest
    def ingest(self, sample: TelemetrySample) -> None:
        buf = self._samples[sample.tier]
        if buf and sample.t < buf[-1][0].t:
            raise OutOfOrderError(f"{sample.tier}: sample t={sample.t} before {buf[-1][0].t}")
        codes = self._pending_codes[sample.tier]
        self._pending_codes[sample.tier] = Counter()
        buf.append((sample, codes))
        self._first_t.setdefault(sample.tier, sample.t)
        self.now = max(self.now, sample.t)
        horizon = sample.t - self.retention
        while buf and buf[0][0].t <= horizon:
            buf.popleft()
        logs = self._logs[sample.tier]
        while logs and logs[0].t <= horizon:
            logs.popleft()

    def ingest_log(self, event: LogEvent) -> None:
        if event.code not in LOG_CODES:
            raise ValueError(f"unknown log code {event.code!r}")
        last = self._last_log_t.get(event.tier)
        if last is not None and event.t < last:
            raise OutOfOrderError(f"{event.tier}: log t={event.t} before {last}")
        self._last_log_t[event.tier] = event.t
        self._logs[event.tier].append(event)
        self._pending_codes[event.tier][event.code] += 1

    # ----------------------------------------------------------------- queries
    def samples(self, tier: str, duration: float | None = None, now: float | None = None) -> list[TelemetrySample]:
        return [s for s, _ in self._window_entries(tier, duration, now)]

    def _window_entries(self, tier: str, duration: float | None, now: float | None):
        buf = self._samples[tier]
        if duration is None:
            return list(buf)
        if duration > self.retention:
            raise ValueError(f"window {duration}s exceeds retention {self.retention}s")
        now = self.now if now is None else now
        lo = now - duration
        out = []
        for entry in reversed(buf):
            t = entry[0].t
            if t > now + _EPS:
                continue
            if t <= lo + _EPS:
                break
            out.append(entry)
        out.reverse()
        return out

    def logs(self, tier: str | None = None, code: str | None = None,
             t0: float = -math.inf, t1: float = math.inf) -> list[LogEvent]:
        tiers = [tier] if tier else list(self._logs)
        return [e for name in tiers for e in self._logs[name]
                if (code is None or e.code == code) and t0 < e.t <= t1]

    def window(self, metric: str, tier: str, duration: float, now: float | None = None) -> WindowStats:
        if metric not in METRICS:
            raise KeyError(f"unknown metric {metric!r}")
        pts = [(s.t, sample_value(s, metric)) for s in self.samples(tier, duration, now)]
        pts = [(t, v) for t, v in pts if v is not None]
        if not pts:
            return WindowStats(metric, tier, duration, 0)
        ts = [t for t, _ in pts]
        vs = [v for _, v in pts]
        return WindowStats(
            metric, tier, duration, len(vs),
            mean=sum(vs) / len(vs), max=max(vs), p95=nearest_rank(vs, 0.95),
            slope=ls_slope(ts, vs),
        )

    def code_counts(self, tier: str, duration: float, now: float | None = None) -> tuple[Counter, int]:
        """(log-code counts, request count) over the window."""
        codes: Counter = Counter()
        requests = 0
        for s, c in self._window_entries(tier, duration, now):
            codes.update(c)
            requests += s.request_count
        return codes, requests

    def has_history(self, tier: str, needed: float = MIN_HISTORY, now: float | None = None) -> bool:
        first = self._first_t.get(tier)
        now = self.now if now is None else now
        return first is not None and now - first >= needed - 1.0 - _EPS

    def feature_vector(self, tier: str, now: float | None = None) -> list[float]:
        """Ten features over the last 10 s; the order is part of the contract."""
        now = self.now if now is None else now
        if not self.has_history(tier, now=now):
            raise InsufficientHistory(f"{tier}: need {MIN_HISTORY:.0f}s of history at t={now}")
        entries = self._window_entries(tier, FEATURE_WINDOW, now)
        return features_from_entries(entries)


def features_from_entries(entries) -> list[float]:
    n = len(entries)
    if n == 0:
        return [0.0] * len(FEATURE_NAMES)
    samples = [s for s, _ in entries]
    cpu = [s.cpu_util for s in samples]
    ts = [s.t for s in samples]
    mem = [s.mem_used for s in samples]
    req = sum(s.request_count for s in samples)
    err = sum(s.error_count for s in samples)
    rt_num = sum(s.mean_rt * s.request_count for s in samples if s.mean_rt is not None)
    rt_den = sum(s.request_count for s in samples if s.mean_rt is not None)
    p95s = [s.p95_rt for s in samples if s.p95_rt is not None]
    codes: Counter = Counter()
    for _, c in entries:
        codes.update(c)
    return [
        sum(cpu) / n,
        max(cpu),
        ls_slope(ts, mem),
        rt_num / rt_den if rt_den else 0.0,
        nearest_rank(p95s, 0.95) if p95s else 0.0,
        err / req if req else 0.0,
        codes["HTTP-500"] / req if req else 0.0,
        (codes["DB-TIMEOUT"] + codes["CONN-REFUSED"]) / req if req else 0.0,
        sum(s.queue_len for s in samples) / n,
        sum(1.0 for s in samples if s.available) / n,
    ]
