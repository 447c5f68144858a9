from collections import Counter

import pytest

from selfheal.analyze.analyzer import Diagnosis
from selfheal.chaos import CPU_OVERLOAD, DIAGNOSIS_CLASSES, MEMORY_LEAK
from selfheal.engine import RngStream
from selfheal.plan import (
    ACTIONS, DuplicateOutcome, KnowledgeBase, Strategy, UnknownClass, default_rules, rules_from_json,
    rules_to_json,
)


def diag(cls=MEMORY_LEAK, tier="api"):
    return Diagnosis(1, cls, 1.0, 50.0, "signature", tier)


def test_every_class_has_two_strategies_over_known_actions():
    rules = default_rules()
    assert set(rules) == set(DIAGNOSIS_CLASSES)
    for cls, items in rules.items():
        assert len(items) >= 2
        assert all(a in ACTIONS for st in items for a in st.actions)
        assert all(st.fault_class == cls for st in items)


def test_rule_table_json_round_trip():
    rules = default_rules()
    again = rules_from_json(rules_to_json(rules))
    assert rules_to_json(again) == rules_to_json(rules)


def test_strategy_rejects_unknown_actions():
    with pytest.raises(ValueError):
        Strategy("x", MEMORY_LEAK, ("Reboot",))


def test_empty_kb_picks_the_first_rule():
    plan = KnowledgeBase().select(diag(), eps=0.0)
    assert plan.strategy_id == "leak-restart" and plan.mode == "rule-default"


def test_higher_success_rate_wins_at_equal_ttr():
    kb = KnowledgeBase()
    kb.records.clear()
    for i in range(10):
        kb.record_outcome(MEMORY_LEAK, "leak-patch", i < 9, 3.0)
        kb.record_outcome(MEMORY_LEAK, "leak-restart", i < 5, 3.0)
    # (10/12)/3.1 against (6/12)/3.1
    assert kb.utility(MEMORY_LEAK, "leak-patch") == pytest.approx((10 / 12) / 3.1)
    assert kb.utility(MEMORY_LEAK, "leak-restart") == pytest.approx((6 / 12) / 3.1)
    assert kb.select(diag(), eps=0.0).strategy_id == "leak-patch"


def test_full_exploration_is_uniform():
    kb = KnowledgeBase()
    rng = RngStream("actions", 123)
    picks = Counter(kb.select(diag(CPU_OVERLOAD), eps=1.0, stream=rng).strategy_id for _ in range(1000))
    assert set(picks) == {"cpu-throttle", "cpu-scaleout"}
    assert all(abs(c / 1000 - 0.5) <= 0.05 for c in picks.values())


def test_exploration_needs_a_stream():
    with pytest.raises(ValueError):
        KnowledgeBase().select(diag(), eps=0.5)


def test_ttr_ema_updates():
    kb = KnowledgeBase()
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 4.0)
    rec = kb.records[(MEMORY_LEAK, "leak-patch")]
    assert rec.ttr_ema == 4.0
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 2.0)
    assert rec.ttr_ema == pytest.approx(3.4)
    kb.record_outcome(MEMORY_LEAK, "leak-patch", False)
    assert rec.failures == 1 and rec.ttr_ema == pytest.approx(3.4)


def test_kb_size_counts_distinct_pairs():
    kb = KnowledgeBase()
    assert kb.kb_size() == 0
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 4.0)
    kb.record_outcome(CPU_OVERLOAD, "cpu-throttle", False)
    assert kb.kb_size() == 2
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 4.0)
    assert kb.kb_size() == 2


def test_learning_disabled_keeps_kb_empty():
    kb = KnowledgeBase(learning=False)
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 4.0)
    assert kb.kb_size() == 0


def test_outcome_recorded_once():
    kb = KnowledgeBase()
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 1.0, outcome_key=(1, 7))
    with pytest.raises(DuplicateOutcome):
        kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 1.0, outcome_key=(1, 7))


def test_unknown_class_and_mismatched_strategy():
    kb = KnowledgeBase()
    with pytest.raises(UnknownClass):
        kb.select(diag("Alien"))
    with pytest.raises(UnknownClass):
        kb.record_outcome(MEMORY_LEAK, "cpu-throttle", True, 1.0)
    with pytest.raises(ValueError):
        kb.record_outcome(MEMORY_LEAK, "leak-patch", True, None)


def test_kb_persists_through_json(tmp_path):
    kb = KnowledgeBase()
    kb.record_outcome(MEMORY_LEAK, "leak-patch", True, 4.0)
    kb.record_outcome(MEMORY_LEAK, "leak-restart", False)
    kb.save(tmp_path / "kb.json")
    other = KnowledgeBase()
    other.load(tmp_path / "kb.json")
    assert other.export_json() == kb.export_json()
    assert other.ranked(MEMORY_LEAK)[0].id == "leak-patch"
