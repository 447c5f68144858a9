"""Experiment configuration: YAML document, defaults and validation with field paths."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .chaos import catalog
from .execute import Calibration, Mode
from .webapp import WorkloadConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class DetectionConfig:
    threshold: float = 0.85
    match_window: float = 30.0
    n_trees: int = 100
    subsample: int = 256
    max_depth: int = 8
    min_leaf: int = 20
    training_runs: int = 20
    training_duration: float = 210.0
    healthy_training_duration: float = 600.0
    kmeans_k: int = 6


@dataclass
class PlanConfig:
    eps: float = 0.1
    eps_decay: float = 0.8
    feedback: bool = True
    carry_kb: bool = True  # knowledge persists across replications of one experiment


@dataclass
class SweepConfig:
    thresholds: list[float] = field(default_factory=lambda: [0.80, 0.85, 0.90, 0.95])
    users: list[int] = field(default_factory=lambda: [50, 100, 150, 200])
    fault_rates: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    campaign_duration: float = 600.0
    modes: list[str] = field(default_factory=lambda: ["AutoFix", "NoHeal"])


@dataclass
class ExperimentConfig:
    seed: int = 42
    mode: str = "AutoFix"
    scenarios: list[int] = field(default_factory=lambda: [s.id for s in catalog()])
    replications: int = 5
    warmup: float = 40.0
    gap: float = 60.0
    feedback_cycles: int = 5
    feedback_chains: int = 3
    baseline_seeds: int = 10
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)
    calibration: Calibration = field(default_factory=Calibration)
    output_dir: str = "out"

    @property
    def mode_enum(self) -> Mode:
        return Mode.parse(self.mode)

    def to_dict(self) -> dict:
        return asdict(self)

    def copy(self, **changes) -> "ExperimentConfig":
        c = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(c, k, v)
        return c

    def validate(self) -> "ExperimentConfig":
        def need(cond, path, msg):
            if not cond:
                raise ConfigError(path, msg)

        need(isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64, "seed", "must be an unsigned 64-bit integer")
        try:
            Mode.parse(self.mode)
        except ValueError as exc:
            raise ConfigError("mode", str(exc)) from None
        ids = {s.id for s in catalog()}
        need(len(self.scenarios) > 0, "scenarios", "must select at least one scenario")
        for i, sid in enumerate(self.scenarios):
            need(sid in ids, f"scenarios[{i}]", f"unknown scenario id {sid}")
        need(self.replications >= 1, "replications", "must be >= 1")
        need(self.warmup >= 30.0, "warmup", "must be >= 30 s so detectors have history")
        need(self.gap >= 0, "gap", "must be >= 0")
        need(self.feedback_cycles >= 2, "feedback_cycles", "must be >= 2")
        need(self.feedback_chains >= 1, "feedback_chains", "must be >= 1")
        need(self.baseline_seeds >= 1, "baseline_seeds", "must be >= 1")
        try:
            self.workload.validate()
        except ValueError as exc:
            raise ConfigError("workload", str(exc).removeprefix("workload.")) from None
        d = self.detection
        need(0.0 < d.threshold < 1.0, "detection.threshold", "must lie in (0, 1)")
        need(d.match_window > 0, "detection.match_window", "must be > 0")
        need(d.n_trees >= 1, "detection.n_trees", "must be >= 1")
        need(d.subsample >= 2, "detection.subsample", "must be >= 2")
        need(d.min_leaf >= 1, "detection.min_leaf", "must be >= 1")
        need(d.training_runs >= 1, "detection.training_runs", "must be >= 1")
        need(d.kmeans_k >= 1, "detection.kmeans_k", "must be >= 1")
        p = self.plan
        need(0.0 <= p.eps <= 1.0, "plan.eps", "must lie in [0, 1]")
        need(0.0 < p.eps_decay <= 1.0, "plan.eps_decay", "must lie in (0, 1]")
        s = self.sweeps
        for name in ("thresholds", "users", "fault_rates", "modes"):
            need(len(getattr(s, name)) > 0, f"sweeps.{name}", "must be non-empty")
        for i, th in enumerate(s.thresholds):
            need(0.0 < th < 1.0, f"sweeps.thresholds[{i}]", "must lie in (0, 1)")
            if not 0.80 <= th <= 0.95:
                log.warning("sweeps.thresholds[%d]=%s outside the documented 0.80-0.95 range", i, th)
        for i, u in enumerate(s.users):
            need(isinstance(u, int) and u >= 1, f"sweeps.users[{i}]", "must be a positive integer")
            if not 50 <= u <= 200:
                log.warning("sweeps.users[%d]=%s outside the documented 50-200 range", i, u)
        for i, r in enumerate(s.fault_rates):
            need(r >= 0, f"sweeps.fault_rates[{i}]", "must be >= 0")
        for i, m in enumerate(s.modes):
            try:
                Mode.parse(m)
            except ValueError as exc:
                raise ConfigError(f"sweeps.modes[{i}]", str(exc)) from None
        need(s.campaign_duration > 0, "sweeps.campaign_duration", "must be > 0")
        try:
            self.calibration.validate("calibration")
        except ValueError as exc:
            msg = str(exc)
            path, _, rest = msg.partition(": ")
            raise ConfigError(path, rest) from None
        return self


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")
    default = cls()
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}" if path else name
        if name not in data:
            continue
        value = data[name]
        current = getattr(default, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, sub)
        elif isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigError(sub, "expected a mapping")
            merged = copy.deepcopy(current)
            for k, v in value.items():
                if isinstance(v, dict) and isinstance(merged.get(k), dict):
                    merged[k].update(v)
                else:
                    merged[k] = v
            kwargs[name] = merged
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(sub, "expected true or false")
            kwargs[name] = value
        elif isinstance(current, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(sub, f"expected an integer, got {value!r}")
            kwargs[name] = value
        elif isinstance(current, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(sub, f"expected a number, got {value!r}")
            kwargs[name] = float(value)
        elif isinstance(current, list):
            if not isinstance(value, list):
                raise ConfigError(sub, "expected a list")
            kwargs[name] = list(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(sub, f"expected a string, got {value!r}")
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "").validate()


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    return config_from_dict(data)


def default_config_yaml() -> str:
    return yaml.safe_dump(ExperimentConfig().to_dict(), sort_keys=False)
