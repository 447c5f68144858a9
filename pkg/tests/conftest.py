import pytest

from selfheal.config import config_from_dict
from selfheal.experiment import run_experiment

SMALL = {
    "scenarios": [1, 4, 16],
    "replications": 2,
    "warmup": 30.0,
    "gap": 40.0,
    "baseline_seeds": 2,
    "feedback_cycles": 2,
    "feedback_chains": 1,
    "detection": {"n_trees": 30, "subsample": 128, "training_runs": 4, "healthy_training_duration": 200.0},
    "sweeps": {"thresholds": [0.8, 0.95], "users": [50, 100], "fault_rates": [0.0, 2.0], "campaign_duration": 120.0},
}


@pytest.fixture(scope="session")
def small_cfg():
    return config_from_dict(SMALL)


@pytest.fixture(scope="session")
def small_report(small_cfg):
    return run_experiment(small_cfg)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-scale acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
