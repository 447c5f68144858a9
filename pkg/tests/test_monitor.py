import math

import pytest
from hypothesis import given, settings, strategies as st

from selfheal.monitor import (
    FEATURE_NAMES, InsufficientHistory, Monitor, OutOfOrderError, ls_slope, nearest_rank,
)
from selfheal.webapp import LogEvent, TelemetrySample


def sample(t, tier="api", cpu=0.1, mem=100.0, rt=20.0, req=10, err=0, avail=True):
    return TelemetrySample(t, tier, cpu, mem, rt, rt, req, err, 0, avail)


def test_retention_evicts_oldest():
    m = Monitor(["api"], retention=300)
    for t in range(1, 302):
        m.ingest(sample(float(t)))
    kept = m.samples("api")
    assert len(kept) == 300 and kept[0].t == 2.0


def test_out_of_order_sample_rejected():
    m = Monitor(["api"])
    m.ingest(sample(5.0))
    with pytest.raises(OutOfOrderError):
        m.ingest(sample(4.0))


def test_logs_queryable_by_code_and_window():
    m = Monitor(["db"])
    for t, code in [(1.0, "DB-TIMEOUT"), (2.0, "HTTP-500"), (3.0, "DB-TIMEOUT")]:
        m.ingest_log(LogEvent(t, "db", "error", code))
    assert [e.t for e in m.logs("db", "DB-TIMEOUT", 1.5, 3.0)] == [3.0]
    with pytest.raises(ValueError):
        m.ingest_log(LogEvent(4.0, "db", "error", "SEGFAULT"))


def test_constant_series_has_zero_slope():
    m = Monitor(["api"])
    for t in range(1, 11):
        m.ingest(sample(float(t), cpu=0.4))
    assert m.window("cpu_util", "api", 10).slope == 0.0


def test_linear_series_mean_and_slope():
    m = Monitor(["api"])
    for t, v in zip((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)):
        m.ingest(sample(t, mem=v))
    w = m.window("mem_used", "api", 3)
    assert w.mean == pytest.approx(2.0) and w.slope == pytest.approx(1.0)


def test_p95_nearest_rank_of_one_to_hundred():
    assert nearest_rank(list(range(1, 101)), 0.95) == 95


def test_idle_tier_features():
    m = Monitor(["api"])
    for t in range(1, 31):
        m.ingest(sample(float(t), req=0, rt=None))
    fv = m.feature_vector("api")
    assert len(fv) == len(FEATURE_NAMES) == 10
    named = dict(zip(FEATURE_NAMES, fv))
    assert named["error_rate"] == 0 and named["http500_rate"] == 0 and named["availability"] == 1.0


def test_down_tier_has_zero_availability_feature():
    m = Monitor(["api"])
    for t in range(1, 41):
        m.ingest(sample(float(t), avail=t <= 20))
    assert dict(zip(FEATURE_NAMES, m.feature_vector("api")))["availability"] == 0.0


def test_features_need_history():
    m = Monitor(["api"])
    m.ingest(sample(1.0))
    with pytest.raises(InsufficientHistory):
        m.feature_vector("api")


def test_code_rates_use_window_requests():
    m = Monitor(["api"])
    for t in range(1, 31):
        if t > 25:
            m.ingest_log(LogEvent(t - 0.5, "api", "error", "HTTP-500"))
        m.ingest(sample(float(t), req=10, err=1 if t > 25 else 0))
    named = dict(zip(FEATURE_NAMES, m.feature_vector("api")))
    assert named["http500_rate"] == pytest.approx(5 / 100)
    assert named["error_rate"] == pytest.approx(5 / 100)


def test_window_longer_than_retention_is_rejected():
    m = Monitor(["api"], retention=60)
    with pytest.raises(ValueError):
        m.window("cpu_util", "api", 61)


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(min_value=0, max_value=1e3, allow_nan=False), min_size=1, max_size=80),
    duration=st.integers(min_value=1, max_value=90),
)
def test_window_stats_match_brute_force(values, duration):
    m = Monitor(["api"], retention=300)
    for i, v in enumerate(values):
        m.ingest(sample(float(i + 1), cpu=v))
    now = float(len(values))
    inside = [(float(i + 1), v) for i, v in enumerate(values) if now - duration < i + 1 <= now]
    w = m.window("cpu_util", "api", duration)
    assert w.count == len(inside)
    vs = sorted(v for _, v in inside)
    assert w.mean == pytest.approx(sum(vs) / len(vs))
    assert w.max == max(vs)
    assert w.p95 == vs[math.ceil(0.95 * len(vs)) - 1]
    assert w.slope == pytest.approx(ls_slope([t for t, _ in inside], [v for _, v in inside]), abs=1e-9)
