import logging

import pytest
import yaml

from selfheal.config import ConfigError, ExperimentConfig, config_from_dict, default_config_yaml, load_config


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg.replications == 5 and cfg.workload.users == 100 and cfg.detection.threshold == 0.85
    assert len(cfg.scenarios) == 20 and cfg.feedback_cycles == 5


def test_default_yaml_round_trips():
    data = yaml.safe_load(default_config_yaml())
    assert config_from_dict(data).to_dict() == ExperimentConfig().to_dict()


def test_partial_override_keeps_other_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 7\ndetection:\n  threshold: 0.9\ncalibration:\n  success:\n    MemoryLeak:\n      ApplyPatch: 0.5\n")
    cfg = load_config(p)
    assert cfg.seed == 7 and cfg.detection.threshold == 0.9 and cfg.detection.n_trees == 100
    leak = cfg.calibration.success["MemoryLeak"]
    assert leak["ApplyPatch"] == 0.5 and leak["RestartService"] == 0.4


@pytest.mark.parametrize("data,path", [
    ({"replications": 0}, "replications"),
    ({"detection": {"threshold": 1.2}}, "detection.threshold"),
    ({"scenarios": [1, 42]}, "scenarios[1]"),
    ({"mode": "Magic"}, "mode"),
    ({"workload": {"users": 0}}, "workload"),
    ({"sweeps": {"users": [100, -5]}}, "sweeps.users[1]"),
    ({"sweeps": {"thresholds": []}}, "sweeps.thresholds"),
    ({"detection": {"colour": 1}}, "detection.colour"),
    ({"seed": "abc"}, "seed"),
    ({"plan": {"feedback": "yes"}}, "plan.feedback"),
    ({"calibration": {"latency": {"ScaleOut": -1}}}, "calibration.latency.ScaleOut"),
])
def test_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert exc.value.path == path


def test_out_of_range_sweep_warns_but_runs(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = config_from_dict({"sweeps": {"users": [20, 100]}})
    assert cfg.sweeps.users == [20, 100]
    assert "outside the documented" in caplog.text


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        load_config(bad)
