"""Rule table, knowledge base and utility-ranked strategy selection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .chaos import CPU_OVERLOAD, DB_TIMEOUT, HTTP_500, LOGIC_ERROR, MEMORY_LEAK, SERVICE_CRASH
from .engine import RngStream

ACTIONS = ("RestartService", "RollbackDeploy", "ClearCache", "ReconnectDb", "ApplyPatch",
           "ThrottleTraffic", "ScaleOut")

EMA_ALPHA = 0.3
UNTRIED_TTR = 5.0
TTR_OFFSET = 0.1


class UnknownClass(KeyError):
    pass


class DuplicateOutcome(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    id: str
    fault_class: str
    actions: tuple[str, ...]
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError(f"strategy {self.id} has no actions")
        unknown = [a for a in self.actions if a not in ACTIONS]
        if unknown:
            raise ValueError(f"strategy {self.id} uses unknown actions {unknown}")

    def to_json(self) -> dict:
        return {"id": self.id, "fault_class": self.fault_class, "actions": list(self.actions),
                "params": dict(self.params)}

    @classmethod
    def from_json(cls, d: dict) -> "Strategy":
        return cls(d["id"], d["fault_class"], tuple(d["actions"]), dict(d.get("params", {})))


RuleTable = dict[str, list[Strategy]]


def default_rules() -> RuleTable:
    def s(sid, cls, *actions, **params):
        return Strategy(sid, cls, tuple(actions), params)

    return {
        SERVICE_CRASH: [s("crash-restart", SERVICE_CRASH, "RestartService"),
                        s("crash-rollback-restart", SERVICE_CRASH, "RollbackDeploy", "RestartService")],
        MEMORY_LEAK: [s("leak-restart", MEMORY_LEAK, "RestartService", scope="worker"),
                      s("leak-patch", MEMORY_LEAK, "ApplyPatch")],
        DB_TIMEOUT: [s("db-reconnect", DB_TIMEOUT, "ReconnectDb"),
                     s("db-restart", DB_TIMEOUT, "RestartService", scope="db")],
        CPU_OVERLOAD: [s("cpu-throttle", CPU_OVERLOAD, "ThrottleTraffic", factor=0.5),
                       s("cpu-scaleout", CPU_OVERLOAD, "ScaleOut", n=1)],
        HTTP_500: [s("http500-rollback", HTTP_500, "RollbackDeploy"),
                   s("http500-patch", HTTP_500, "ApplyPatch")],
        LOGIC_ERROR: [s("logic-patch", LOGIC_ERROR, "ApplyPatch"),
                      s("logic-rollback", LOGIC_ERROR, "RollbackDeploy")],
    }


def rules_to_json(rules: RuleTable) -> dict:
    return {cls: [st.to_json() for st in strategies] for cls, strategies in rules.items()}


def rules_from_json(data: dict) -> RuleTable:
    rules = {cls: [Strategy.from_json(d) for d in items] for cls, items in data.items()}
    for cls, items in rules.items():
        if any(st.fault_class != cls for st in items):
            raise ValueError(f"rule table entry for {cls!r} lists a strategy for another class")
    return rules


@dataclass
class KnowledgeRecord:
    fault_class: str
    strategy_id: str
    successes: int = 0
    failures: int = 0
    ttr_ema: float | None = None

    @property
    def trials(self) -> int:
        return self.successes + self.failures

    @property
    def key(self) -> tuple[str, str]:
        return (self.fault_class, self.strategy_id)


@dataclass
class RecoveryPlan:
    diagnosis_id: int
    fault_class: str
    tier: str
    strategy_id: str
    actions: tuple[str, ...]
    mode: str  # rule-default | kb-ranked | explore
    ranking: tuple[str, ...] = ()  # full strategy order, chosen strategy first


class KnowledgeBase:
    """Per-(class, strategy) outcome statistics; single writer between ticks."""

    def __init__(self, rules: RuleTable | None = None, learning: bool = True):
        self.rules = rules if rules is not None else default_rules()
        self.learning = learning
        self.records: dict[tuple[str, str], KnowledgeRecord] = {}
        self._recorded: set = set()

    # -------------------------------------------------------------- selection
    def strategies(self, fault_class: str) -> list[Strategy]:
        try:
            return self.rules[fault_class]
        except KeyError:
            raise UnknownClass(f"no rules for class {fault_class!r}") from None

    def utility(self, fault_class: str, strategy_id: str) -> float:
        rec = self.records.get((fault_class, strategy_id))
        if rec is None:
            return (1.0 / 2.0) / (UNTRIED_TTR + TTR_OFFSET)
        ttr = rec.ttr_ema if rec.ttr_ema is not None else UNTRIED_TTR
        return ((rec.successes + 1) / (rec.trials + 2)) / (ttr + TTR_OFFSET)

    def ranked(self, fault_class: str) -> list[Strategy]:
        """Strategies by descending utility; stable sort keeps rule order on ties."""
        items = self.strategies(fault_class)
        return sorted(items, key=lambda st: -self.utility(fault_class, st.id))

    def select(self, diagnosis, eps: float = 0.0, stream: RngStream | None = None) -> RecoveryPlan:
        ranking = self.ranked(diagnosis.fault_class)
        mode = "rule-default" if not any(
            (diagnosis.fault_class, st.id) in self.records for st in ranking) else "kb-ranked"
        if eps > 0.0:
            if stream is None:
                raise ValueError("exploration needs an RNG stream")
            if stream.uniform01() < eps:
                eligible = self.strategies(diagnosis.fault_class)
                pick = eligible[stream.randbelow(len(eligible))]
                ranking = [pick] + [st for st in ranking if st.id != pick.id]
                mode = "explore"
        chosen = ranking[0]
        return RecoveryPlan(diagnosis.id, diagnosis.fault_class, diagnosis.tier, chosen.id,
                            chosen.actions, mode, tuple(st.id for st in ranking))

    # ---------------------------------------------------------------- updates
    def record_outcome(self, fault_class: str, strategy_id: str, success: bool,
                       ttr: float | None = None, outcome_key=None) -> None:
        if outcome_key is not None:
            if outcome_key in self._recorded:
                raise DuplicateOutcome(f"outcome {outcome_key!r} already recorded")
            self._recorded.add(outcome_key)
        if not self.learning:
            return
        if strategy_id not in {st.id for st in self.strategies(fault_class)}:
            raise UnknownClass(f"strategy {strategy_id!r} does not serve {fault_class!r}")
        rec = self.records.setdefault((fault_class, strategy_id), KnowledgeRecord(fault_class, strategy_id))
        if success:
            if ttr is None or ttr < 0:
                raise ValueError("a successful outcome needs a non-negative TTR")
            rec.successes += 1
            rec.ttr_ema = ttr if rec.ttr_ema is None else EMA_ALPHA * ttr + (1 - EMA_ALPHA) * rec.ttr_ema
        else:
            rec.failures += 1

    def kb_size(self) -> int:
        return sum(1 for r in self.records.values() if r.trials >= 1)

    # ------------------------------------------------------------ persistence
    def export_json(self) -> list[dict]:
        return [
            {"fault_class": r.fault_class, "strategy_id": r.strategy_id, "successes": r.successes,
             "failures": r.failures, "ttr_ema": r.ttr_ema}
            for r in sorted(self.records.values(), key=lambda r: r.key)
        ]

    def import_json(self, items: list[dict]) -> None:
        self.records = {}
        for d in items:
            rec = KnowledgeRecord(d["fault_class"], d["strategy_id"], int(d["successes"]),
                                  int(d["failures"]), d.get("ttr_ema"))
            self.records[rec.key] = rec

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.export_json(), indent=2) + "\n")

    def load(self, path: str | Path) -> None:
        self.import_json(json.loads(Path(path).read_text()))
