import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfheal.analyze.analyzer import Analyzer, Diagnosis, rule_signatures
from selfheal.analyze.confusion import ConfusionCounts, DetectionScorer, rescore
from selfheal.analyze.dtree import classify, fit_dtree, gini
from selfheal.analyze.iforest import (
    _build_tree, c_norm, expected_path_length, fit_iforest, iforest_score,
)
from selfheal.analyze.kmeans import cluster_purity, fit_kmeans, kmeans_assign
from selfheal.chaos import (
    CPU_OVERLOAD, DB_TIMEOUT, DIAGNOSIS_CLASSES, HTTP_500, MEMORY_LEAK, REPORT_CLASSES, SERVICE_CRASH,
    FaultEvent, FaultType,
)
from selfheal.engine import RngStream
from selfheal.monitor import Monitor
from selfheal.webapp import LogEvent, TelemetrySample


# ------------------------------------------------------------- isolation forest
def test_c_norm_closed_form():
    assert c_norm(1) == 0.0
    assert c_norm(2) == 1.0
    # 2 H(255) - 2*255/256 with H(n) ~ ln n + gamma
    assert c_norm(256) == pytest.approx(10.2447, abs=1e-4)


def test_single_point_tree_has_depth_zero():
    tree = _build_tree(np.array([[1.0, 2.0]]), 8, RngStream("detectors", 0))
    assert tree.depth == 0


def test_identical_points_score_equally():
    data = np.ones((1000, 3))
    model = fit_iforest(data, n_trees=20, subsample=64, seed=1)
    scores = {round(iforest_score(model, x), 12) for x in ([1, 1, 1], [5, -2, 0], [1, 1, 1.5])}
    assert len(scores) == 1


def test_score_is_one_half_at_the_normaliser():
    model = fit_iforest(np.random.default_rng(0).normal(size=(300, 2)), n_trees=10, subsample=128, seed=2)
    assert 2.0 ** (-model.c_norm / model.c_norm) == 0.5
    for x in ([0, 0], [3, 3]):
        s = iforest_score(model, x)
        assert 0.0 < s < 1.0


def test_far_point_outscores_every_inlier():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(512, 4))
    model = fit_iforest(data, n_trees=50, subsample=256, seed=3)
    far = iforest_score(model, [9, 9, 9, 9])
    assert all(far > iforest_score(model, x) for x in data[:200])


def test_planted_outliers_auc():
    rng = np.random.default_rng(7)
    inliers = rng.normal(size=(400, 3))
    outliers = rng.uniform(4, 8, size=(20, 3)) * rng.choice([-1, 1], size=(20, 3))
    model = fit_iforest(inliers, n_trees=100, subsample=256, seed=4)
    s_in = [iforest_score(model, x) for x in inliers]
    s_out = [iforest_score(model, x) for x in outliers]
    # brute-force AUC: fraction of (outlier, inlier) pairs ranked correctly
    auc = sum((o > i) + 0.5 * (o == i) for o in s_out for i in s_in) / (len(s_in) * len(s_out))
    assert auc >= 0.95


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=3, max_size=3))
def test_vectorised_path_matches_per_tree_walk(x):
    model = _shared_forest()
    per_tree = sum(t.path_length(x) for t in model.trees) / len(model.trees)
    assert expected_path_length(model, x) == pytest.approx(per_tree, abs=1e-12)
    assert 0.0 < iforest_score(model, x) < 1.0


_FOREST = []


def _shared_forest():
    if not _FOREST:
        _FOREST.append(fit_iforest(np.random.default_rng(3).normal(size=(300, 3)), 30, 128, seed=5))
    return _FOREST[0]


def test_iforest_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_iforest(np.ones(5), subsample=2)
    with pytest.raises(ValueError):
        fit_iforest(np.ones((3, 2)), subsample=8)
    with pytest.raises(ValueError):
        iforest_score(_shared_forest(), [1.0])


# ----------------------------------------------------------------------- kmeans
def test_single_cluster_centroid_is_the_mean():
    x = np.random.default_rng(2).normal(size=(50, 3))
    res = fit_kmeans(x, 1, RngStream("detectors", 1))
    assert np.allclose(res.centroids[0], x.mean(axis=0))


def test_lloyd_inertia_never_increases():
    x = np.random.default_rng(5).normal(size=(300, 2))
    hist = fit_kmeans(x, 5, RngStream("detectors", 9)).inertia_history
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_separated_blobs_are_pure():
    rng = np.random.default_rng(8)
    a, b = rng.normal(0, 0.3, size=(100, 2)), rng.normal(10, 0.3, size=(100, 2))
    x = np.vstack([a, b])
    labels = ["a"] * 100 + ["b"] * 100
    res = fit_kmeans(x, 2, RngStream("detectors", 4))
    assert cluster_purity(res.labels, labels) == 1.0
    assert kmeans_assign(res.centroids, [10, 10]) != kmeans_assign(res.centroids, [0, 0])


# ------------------------------------------------------------------------ dtree
def test_gini_of_balanced_two_class_leaf():
    assert gini([5, 5]) == 0.5
    assert gini([7, 0]) == 0.0


def test_separable_data_is_learned_exactly():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(200, 3))
    y = ["pos" if a + 0.5 * b > 0 else "neg" for a, b, _ in x]
    model = fit_dtree(x, y, max_depth=None, min_leaf=1)
    assert all(classify(model, row)[0] == lab for row, lab in zip(x, y))
    assert all(classify(model, row)[1] == 1.0 for row in x)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_consistent_labels_give_perfect_training_accuracy(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, size=(60, 3)).astype(float)
    table = {}
    y = [table.setdefault(tuple(r), str(rng.integers(0, 3))) for r in x]
    model = fit_dtree(x, y, max_depth=None, min_leaf=1)
    assert sum(classify(model, r)[0] == lab for r, lab in zip(x, y)) == len(y)


# ------------------------------------------------------------------- signatures
def _sample(t, tier="api", cpu=0.2, mem=300.0, rt=20.0, req=20, err=0, avail=True):
    return TelemetrySample(t, tier, cpu, mem, rt, rt, req, err, 0, avail)


def _monitor(n=40, **last):
    m = Monitor(["api"])
    for t in range(1, n + 1):
        m.ingest(_sample(float(t), **(last if t > n - 5 else {})))
    return m


def test_unavailable_tier_signals_crash():
    assert rule_signatures(_monitor(avail=False), "api") == [SERVICE_CRASH]


def test_healthy_windows_signal_nothing():
    assert rule_signatures(_monitor(), "api") == []


def test_two_signatures_both_returned():
    m = Monitor(["api"])
    for t in range(1, 41):
        if t > 36:
            for _ in range(5):
                m.ingest_log(LogEvent(t - 0.5, "api", "error", "HTTP-500"))
        m.ingest(_sample(float(t), cpu=0.97 if t > 35 else 0.2, err=5 if t > 36 else 0))
    sigs = rule_signatures(m, "api")
    assert set(sigs) == {HTTP_500, CPU_OVERLOAD}


def test_ml_gate_requires_models():
    with pytest.raises(ValueError):
        Analyzer(Monitor(["api"]), None, use_ml=True)


def test_signature_diagnosis_is_debounced():
    m = _monitor(avail=False)
    an = Analyzer(m, None, use_ml=False)
    d = an.diagnose_tier("api", 40.0)
    assert d.fault_class == SERVICE_CRASH and d.confidence == 1.0
    assert an.diagnose_tier("api", 40.0) is None
    an.resolve(d, 40.0, quiet=5.0)
    assert an.diagnose_tier("api", 41.0) is None


# -------------------------------------------------------------------- confusion
def _fault(fid, ft, tier, t, cleared=None):
    return FaultEvent(fid, 1, ft, tier, t, cleared, "expiry" if cleared else "none")


def _diag(i, cls, tier, t):
    return Diagnosis(i, cls, 1.0, t, "signature", tier)


def test_correct_detection_is_a_true_positive():
    sc = DetectionScorer()
    f = _fault(1, FaultType.SERVICE_CRASH, "api", 10.0)
    delta = sc.update_confusion(_diag(1, SERVICE_CRASH, "api", 11.0), [f], 11.0)
    assert delta.tp[HTTP_500] == 1


def test_detection_in_healthy_period_is_a_false_positive():
    delta = DetectionScorer().update_confusion(_diag(1, MEMORY_LEAK, "db", 5.0), [], 5.0)
    assert delta.fp[MEMORY_LEAK] == 1


def test_undetected_fault_is_a_false_negative():
    f = _fault(1, FaultType.DB_TIMEOUT, "db", 3.0, 48.0)
    assert DetectionScorer().fault_closed(f).fn[DB_TIMEOUT] == 1


_TIERS = ("frontend", "api", "db")


@st.composite
def _scenario(draw):
    faults = []
    for i in range(draw(st.integers(0, 6))):
        t = float(draw(st.integers(0, 200)))
        faults.append(_fault(i + 1, draw(st.sampled_from(list(FaultType))), draw(st.sampled_from(_TIERS)),
                             t, t + draw(st.integers(1, 60))))
    diags = [_diag(i + 1, draw(st.sampled_from(DIAGNOSIS_CLASSES)), draw(st.sampled_from(_TIERS)),
                   float(draw(st.integers(0, 260))))
             for i in range(draw(st.integers(0, 12)))]
    return faults, diags


@settings(max_examples=150, deadline=None)
@given(_scenario())
def test_streaming_scorer_matches_ledger_rescore(case):
    faults, diags = case
    sc = DetectionScorer(30.0)
    events = [(f.t_cleared, 0, f) for f in faults] + [(d.t_detected, 1, d) for d in diags]
    for t, kind, obj in sorted(events, key=lambda e: (e[0], e[1], getattr(e[2], "id", 0),
                                                      getattr(e[2], "fault_id", 0))):
        if kind == 0:
            sc.fault_closed(obj)
        else:
            active = [f for f in faults if f.t_injected <= t < f.t_cleared]
            sc.update_confusion(obj, active, t)
    assert sc.counts.as_dict() == rescore(diags, faults, 30.0).as_dict()
    total_fn = sum(sc.counts.fn.values())
    total_tp = sum(sc.counts.tp.values())
    assert total_fn + total_tp == len(faults)


def test_counts_add_is_elementwise():
    a, b = ConfusionCounts(), ConfusionCounts()
    a.tp[HTTP_500], b.tp[HTTP_500], b.fn[CPU_OVERLOAD] = 2, 3, 1
    a.add(b)
    assert a.tp[HTTP_500] == 5 and a.fn[CPU_OVERLOAD] == 1
    assert set(a.as_dict()) == set(REPORT_CLASSES)
