"""Report emission: JSON, fixed-schema CSV files and markdown tables.

Floats are written with four decimals using round-half-even on the exact
decimal expansion of the binary value; missing values are written as ``n/a``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .chaos import RECOVERY_CLASSES
from .execute import Mode

NA = "n/a"

DETECTION_HEADER = ("class", "precision", "recall", "f1")
RECOVERY_HEADER = ("class", "mode", "mean_ttr_s", "sd_ttr_s", "success_rate_pct", "speed_improvement_pct")
BASELINE_HEADER = ("mode", "mean_ttr_s", "sd_ttr_s", "success_pct", "throughput_retention_pct")
THROUGHPUT_HEADER = ("fault_rate_per_min", "mode", "retention_pct")
FEEDBACK_HEADER = ("cycle", "decision_accuracy_pct", "mean_ttr_s", "kb_size")
OUTCOMES_HEADER = ("fault_id", "class", "mode", "strategy", "success", "t_detected", "t_recovered", "ttr", "attempts")
THRESHOLD_HEADER = ("threshold", "tp", "fp", "fn", "macro_f1")
LOAD_HEADER = ("users", "throughput", "avg_rt_ms", "error_rate_pct", "retention_pct")


class EmitError(OSError):
    pass


def fmt(value, places: int = 4) -> str:
    """Fixed-point text with round-half-even; ``None`` becomes ``n/a``."""
    if value is None:
        return NA
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return NA
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        q = Decimal(1).scaleb(-places)
        return str(Decimal(value).quantize(q, rounding=ROUND_HALF_EVEN))
    return str(value)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(h)) for h in header])
    return buf.getvalue()


def _json_default(o):
    if hasattr(o, "value"):
        return o.value
    if hasattr(o, "__dict__"):
        return o.__dict__
    raise TypeError(f"not serializable: {type(o).__name__}")


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"


# ----------------------------------------------------------------- csv views
def csv_files(report: dict) -> dict[str, str]:
    files = {}
    if "detection" in report:
        det = report["detection"]
        rows = list(det["per_class"]) + [{"class": "Average", **det["macro"]}]
        files["detection_metrics.csv"] = _csv(DETECTION_HEADER, rows)
    if "recovery" in report:
        files["recovery.csv"] = _csv(RECOVERY_HEADER, report["recovery"])
    if "outcomes" in report:
        files["outcomes.csv"] = _csv(OUTCOMES_HEADER, report["outcomes"])
    if "baselines" in report:
        files["baselines.csv"] = _csv(BASELINE_HEADER, report["baselines"])
    if "throughput_series" in report:
        files["throughput_series.csv"] = _csv(THROUGHPUT_HEADER, report["throughput_series"])
    if "threshold_series" in report:
        files["threshold_series.csv"] = _csv(THRESHOLD_HEADER, report["threshold_series"])
    if "load_series" in report:
        files["load_series.csv"] = _csv(LOAD_HEADER, report["load_series"])
    if "feedback" in report:
        files["feedback.csv"] = _csv(FEEDBACK_HEADER, report["feedback"])
    return files


# ------------------------------------------------------------ markdown views
def _md_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _p(v, places=2):
    return fmt(v, places)


def markdown(report: dict) -> str:
    parts = []
    if "detection" in report:
        det = report["detection"]
        rows = [[m["class"], _p(m["precision"]), _p(m["recall"]), _p(m["f1"])] for m in det["per_class"]]
        mac = det["macro"]
        rows.append(["Average", _p(mac["precision"]), _p(mac["recall"]), _p(mac["f1"])])
        parts.append("## Fault detection metrics\n\n"
                     + _md_table(["Fault type", "Precision (%)", "Recall (%)", "F1-score (%)"], rows))
    if "recovery" in report:
        by = {(r["class"], r["mode"]): r for r in report["recovery"]}
        auto_mode = next((r["mode"] for r in report["recovery"] if r["mode"] != Mode.MANUAL.value), None)
        rows = []
        for cls in RECOVERY_CLASSES + ("Average",):
            man = by.get((cls, Mode.MANUAL.value), {})
            auto = by.get((cls, auto_mode), {})
            rows.append([cls, _p(man.get("mean_ttr_s")) + "s", _p(auto.get("mean_ttr_s")) + "s",
                         _p(auto.get("speed_improvement_pct")) + "%", _p(auto.get("success_rate_pct")) + "%"])
        parts.append("## Automated vs manual recovery\n\n" + _md_table(
            ["Fault type", "Avg manual TTR", f"{auto_mode} TTR", "Speed improvement", f"{auto_mode} success rate"],
            rows))
    if "baselines" in report:
        rows = []
        for r in report["baselines"]:
            ttr = NA if r["mean_ttr_s"] is None else f"{_p(r['mean_ttr_s'])} ± {_p(r['sd_ttr_s'])}"
            rows.append([r["mode"], ttr, _p(r["success_pct"], 1), _p(r["throughput_retention_pct"], 1)])
        parts.append("## Recovery performance across baselines\n\n" + _md_table(
            ["Approach", "Mean TTR (s)", "Recovery success (%)", "Throughput retention (%)"], rows))
    if "feedback" in report:
        rows = [[str(p["cycle"]), _p(p["decision_accuracy_pct"]), _p(p["mean_ttr_s"]), str(p["kb_size"])]
                for p in report["feedback"]]
        fm = report["feedback_metrics"]
        parts.append("## Feedback cycles\n\n" + _md_table(
            ["Cycle", "Decision accuracy (%)", "Mean TTR (s)", "KB size"], rows)
            + f"\n\nΔDA = {_p(fm['delta_da'])} pp, KBG = {fm['kbg']}, AE = {_p(fm['ae'], 3)} s/cycle, "
              f"TTR reduction = {_p(fm['ttr_reduction_pct'])}%")
    if "throughput_series" in report:
        rows = [[fmt(r["fault_rate_per_min"], 1), r["mode"], _p(r["retention_pct"])]
                for r in report["throughput_series"]]
        parts.append("## Throughput retention vs fault frequency\n\n" + _md_table(
            ["Faults/min", "Mode", "Retention (%)"], rows))
    if "threshold_series" in report:
        rows = [[fmt(r["threshold"], 2), str(r["tp"]), str(r["fp"]), str(r["fn"]), _p(r["macro_f1"])]
                for r in report["threshold_series"]]
        parts.append("## Detection threshold sweep\n\n" + _md_table(["θ", "TP", "FP", "FN", "Macro F1 (%)"], rows))
    if "load_series" in report:
        rows = [[str(r["users"]), _p(r["throughput"]), _p(r["avg_rt_ms"]), _p(r["error_rate_pct"]),
                 _p(r["retention_pct"])] for r in report["load_series"]]
        parts.append("## Load sweep\n\n" + _md_table(
            ["Users", "Throughput (req/s)", "Avg RT (ms)", "Error rate (%)", "Retention (%)"], rows))
    if "statistics" in report:
        rows = []
        for c in report["statistics"]["comparisons"]:
            rows.append([c["versus"], c["metric"], str(c["n"]), _p(c.get("mean_diff"), 3), _p(c.get("t"), 3),
                         _p(c.get("p"), 4), _p(c.get("p_holm"), 4), _p(c.get("cohens_d"), 3),
                         _p(c.get("wilcoxon_p"), 4)])
        parts.append("## Paired statistics (AutoFix vs baseline)\n\n" + _md_table(
            ["Versus", "Metric", "n", "Mean diff", "t", "p", "p (Holm)", "Cohen's d", "Wilcoxon p"], rows))
    parts.append(f"Seed: {report.get('seed')}  \nDigest: `{report.get('digest')}`")
    return "\n\n".join(parts) + "\n"


def emit(report: dict, out_dir: str | Path, formats=("json", "csv", "md"), stem: str = "report") -> list[Path]:
    """Write the report in each requested format; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            p = out / f"{stem}.json"
            p.write_text(to_json(report))
            written.append(p)
        if "csv" in formats:
            for name, text in csv_files(report).items():
                p = out / name
                p.write_text(text)
                written.append(p)
        if "md" in formats:
            p = out / f"{stem}.md"
            p.write_text(markdown(report))
            written.append(p)
    except OSError as exc:
        raise EmitError(f"cannot write report to {out}: {exc.strerror or exc}") from exc
    return written
