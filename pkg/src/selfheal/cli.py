"""Command line entry point: ``selfheal <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 acceptance-threshold regression
(only when ``--check`` is given), 1 for any other failure such as an unwritable
output directory.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .chaos import dump_catalog
from .config import ConfigError, default_config_yaml, load_config
from .execute import Mode
from .experiment import run_baseline_matrix, run_experiment, run_feedback_study, run_sweeps
from .report import EmitError, emit

log = logging.getLogger("selfheal")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_REGRESSION = 0, 1, 2, 3

RSR_RANGE = (90.2, 96.2)
TTR_RANGE = (3.4, 4.4)
MACRO_F1_FLOOR = 85.0
ORDERED_FRACTION = 0.9
TTR_REDUCTION_FLOOR = 10.0
DELTA_DA_FLOOR = 5.0
AUTOFIX_RETENTION_FLOOR = 85.0
NOHEAL_RETENTION_CEIL = 75.0
CHECK_FAULT_RATE = 2.0
LOAD_DROP_CEIL = 10.0


def _within(v, lo, hi) -> bool:
    return v is not None and lo <= v <= hi


def _avg_row(report: dict, mode: str) -> dict:
    return next(r for r in report["recovery"] if r["class"] == "Average" and r["mode"] == mode)


def checks_run(report: dict) -> list[tuple[str, bool, str]]:
    out = []
    mode = report["config"]["mode"]
    if Mode.parse(mode) is Mode.AUTOFIX:
        avg = _avg_row(report, Mode.AUTOFIX.value)
        out.append(("recovery success rate", _within(avg["success_rate_pct"], *RSR_RANGE),
                    f"{avg['success_rate_pct']:.2f}% in {list(RSR_RANGE)}"))
        out.append(("mean time to recovery", _within(avg["mean_ttr_s"], *TTR_RANGE),
                    f"{avg['mean_ttr_s']:.3f} s in {list(TTR_RANGE)}"))
    f1 = report["detection"]["macro"]["f1"]
    out.append(("macro F1", f1 is not None and f1 >= MACRO_F1_FLOOR, f"{f1:.2f}% >= {MACRO_F1_FLOOR}"))
    return out


def checks_baselines(report: dict) -> list[tuple[str, bool, str]]:
    o = report["ordering"]
    need = math.ceil(ORDERED_FRACTION * o["n_seeds"])
    rows = {r["mode"]: r for r in report["baselines"]}
    noheal = rows[Mode.NO_HEAL.value]["throughput_retention_pct"]
    orch = rows[Mode.ORCHESTRATOR.value]["throughput_retention_pct"]
    return [
        ("TTR ordering", o["ttr_ordered_seeds"] >= need, f"{o['ttr_ordered_seeds']}/{o['n_seeds']} seeds, need {need}"),
        ("retention ordering", o["retention_ordered_seeds"] >= need,
         f"{o['retention_ordered_seeds']}/{o['n_seeds']} seeds, need {need}"),
        ("NoHeal below OrchestratorOnly retention", noheal < orch, f"{noheal:.2f}% < {orch:.2f}%"),
    ]


def checks_feedback(report: dict) -> list[tuple[str, bool, str]]:
    fm = report["feedback_metrics"]
    red, dda = fm["ttr_reduction_pct"], fm["delta_da"]
    return [
        ("TTR reduction", red is not None and red >= TTR_REDUCTION_FLOOR,
         f"{red:.2f}% >= {TTR_REDUCTION_FLOOR}" if red is not None else "n/a"),
        ("decision accuracy gain", dda >= DELTA_DA_FLOOR, f"{dda:.2f} pp >= {DELTA_DA_FLOOR}"),
    ]


def checks_sweep(report: dict) -> list[tuple[str, bool, str]]:
    out = []
    for row in report.get("throughput_series", []):
        if row["fault_rate_per_min"] != CHECK_FAULT_RATE:
            continue
        if row["mode"] == Mode.AUTOFIX.value:
            out.append(("AutoFix retention at 2 faults/min", row["retention_pct"] >= AUTOFIX_RETENTION_FLOOR,
                        f"{row['retention_pct']:.2f}% >= {AUTOFIX_RETENTION_FLOOR}"))
        elif row["mode"] == Mode.NO_HEAL.value:
            out.append(("NoHeal retention at 2 faults/min", row["retention_pct"] <= NOHEAL_RETENTION_CEIL,
                        f"{row['retention_pct']:.2f}% <= {NOHEAL_RETENTION_CEIL}"))
    load = {r["users"]: r for r in report.get("load_series", [])}
    if 100 in load and 200 in load:
        drop = load[100]["retention_pct"] - load[200]["retention_pct"]
        out.append(("retention drop from 100 to 200 users", drop <= LOAD_DROP_CEIL,
                    f"{drop:.2f} pts <= {LOAD_DROP_CEIL}"))
    th = {r["threshold"]: r for r in report.get("threshold_series", [])}
    if th:
        lo, hi = th[min(th)], th[max(th)]
        out.append(("false positives non-increasing in threshold", hi["fp"] <= lo["fp"],
                    f"FP {hi['fp']} at {max(th)} <= FP {lo['fp']} at {min(th)}"))
    return out


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML experiment configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="override the master seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default from config)")
    common.add_argument("--format", action="append", choices=("json", "csv", "md"),
                        help="output format; repeatable (default: all three)")
    common.add_argument("--check", action="store_true", help="exit 3 if an acceptance threshold is missed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="selfheal", description="Self-healing web application experiments")
    p.add_argument("--print-default-config", action="store_true", help="print the default YAML config and exit")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", parents=[common], help="replicated recovery experiment")
    run.add_argument("--mode", metavar="NAME", help="AutoFix, ManualRunbook, RuleOnly, OrchestratorOnly, NoHeal")
    run.add_argument("--replications", type=int, metavar="N")
    base = sub.add_parser("baselines", parents=[common], help="all healing modes on identical seeds")
    base.add_argument("--replications", type=int, metavar="N", help="number of seeds (default baseline_seeds)")
    fb = sub.add_parser("feedback", parents=[common], help="knowledge-base feedback cycles")
    fb.add_argument("--mode", metavar="NAME", help="AutoFix (default) or RuleOnly")
    fb.add_argument("--replications", type=int, metavar="N", help="number of independent chains (default feedback_chains)")
    fb.add_argument("--no-learning", action="store_true", help="disable knowledge-base updates")
    sw = sub.add_parser("sweep", parents=[common], help="threshold, load and fault-rate sweeps")
    sw.add_argument("--which", action="append", choices=("threshold", "load", "fault_rate"))
    cat = sub.add_parser("catalog", help="write the fault scenario catalog as JSON")
    cat.add_argument("--out", metavar="DIR", default=".")
    val = sub.add_parser("validate-config", help="validate a configuration file")
    val.add_argument("--config", metavar="PATH", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        sys.stdout.write(default_config_yaml())
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    if args.command == "catalog":
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            print(dump_catalog(out / "scenarios.json"))
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.command == "validate-config":
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.seed is not None:
            cfg.seed = args.seed
        if getattr(args, "mode", None):
            cfg.mode = args.mode
        if args.command == "run" and args.replications is not None:
            cfg.replications = args.replications
        if args.command == "baselines" and args.replications is not None:
            cfg.baseline_seeds = args.replications
        if args.command == "feedback" and args.replications is not None:
            cfg.feedback_chains = args.replications
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        report, checks = run_experiment(cfg), checks_run
    elif args.command == "baselines":
        report, checks = run_baseline_matrix(cfg), checks_baselines
    elif args.command == "feedback":
        mode = cfg.mode_enum if args.mode else Mode.AUTOFIX
        if mode not in (Mode.AUTOFIX, Mode.RULE_ONLY):
            print(f"config error: mode: feedback study needs AutoFix or RuleOnly, got {mode.value}", file=sys.stderr)
            return EXIT_CONFIG
        report = run_feedback_study(cfg, mode=mode, feedback=not args.no_learning)
        checks = checks_feedback
    else:
        report, checks = run_sweeps(cfg, tuple(args.which or ("threshold", "load", "fault_rate"))), checks_sweep

    out_dir = Path(args.out or cfg.output_dir)
    try:
        for p in emit(report, out_dir, tuple(args.format or ("json", "csv", "md"))):
            print(p)
    except EmitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.check:
        failed = False
        for name, ok, detail in checks(report):
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            failed |= not ok
        if failed:
            return EXIT_REGRESSION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
