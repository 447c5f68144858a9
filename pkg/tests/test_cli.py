import json

import yaml

from selfheal import cli
from selfheal.config import ExperimentConfig, config_from_dict

from conftest import SMALL


def _write_small(tmp_path, **extra):
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump({**SMALL, **extra}))
    return p


def test_print_default_config(capsys):
    assert cli.main(["--print-default-config"]) == 0
    out = capsys.readouterr().out
    assert config_from_dict(yaml.safe_load(out)).to_dict() == ExperimentConfig().to_dict()


def test_no_command_is_usage_error(capsys):
    assert cli.main([]) == cli.EXIT_CONFIG


def test_validate_config(tmp_path, capsys):
    assert cli.main(["validate-config", "--config", str(_write_small(tmp_path))]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("detection:\n  threshold: 2\n")
    assert cli.main(["validate-config", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "detection.threshold" in capsys.readouterr().err


def test_bad_mode_is_config_error(tmp_path, capsys):
    assert cli.main(["run", "--config", str(_write_small(tmp_path)), "--mode", "Wizard"]) == cli.EXIT_CONFIG


def test_catalog(tmp_path, capsys):
    assert cli.main(["catalog", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "scenarios.json").read_text())
    assert len(data) == 20


def test_run_writes_outputs_and_checks(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(_write_small(tmp_path)), "--out", str(out), "--format", "json",
                     "--check"])
    lines = capsys.readouterr().out.splitlines()
    assert (out / "report.json").exists()
    checks = [ln for ln in lines if ln.startswith(("PASS", "FAIL"))]
    assert len(checks) == 3
    assert code == (cli.EXIT_REGRESSION if any(ln.startswith("FAIL") for ln in checks) else cli.EXIT_OK)


def test_unwritable_output_exits_one(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = cli.main(["feedback", "--config", str(_write_small(tmp_path)), "--out", str(blocker / "x")])
    assert code == cli.EXIT_FAIL


def test_check_functions_on_synthetic_reports():
    run = {"config": {"mode": "AutoFix"}, "detection": {"macro": {"f1": 97.0}},
           "recovery": [{"class": "Average", "mode": "AutoFix", "success_rate_pct": 95.0, "mean_ttr_s": 3.8}]}
    assert all(ok for _, ok, _ in cli.checks_run(run))
    run["recovery"][0]["mean_ttr_s"] = 5.0
    assert [ok for _, ok, _ in cli.checks_run(run)] == [True, False, True]
    fb = {"feedback_metrics": {"ttr_reduction_pct": 18.6, "delta_da": 3.0}}
    assert [ok for _, ok, _ in cli.checks_feedback(fb)] == [True, False]
    sweep = {"throughput_series": [{"fault_rate_per_min": 2.0, "mode": "AutoFix", "retention_pct": 90.0},
                                   {"fault_rate_per_min": 2.0, "mode": "NoHeal", "retention_pct": 80.0}],
             "load_series": [{"users": 100, "retention_pct": 95.0}, {"users": 200, "retention_pct": 90.0}],
             "threshold_series": [{"threshold": 0.8, "fp": 3}, {"threshold": 0.95, "fp": 1}]}
    assert [ok for _, ok, _ in cli.checks_sweep(sweep)] == [True, False, True, True]
