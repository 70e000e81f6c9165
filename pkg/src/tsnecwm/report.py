"""Run reports: structured JSON plus flat CSV artifacts.

Every file is written atomically (temp name, then rename) so an aborted
run never leaves a half-written artifact.  All numbers in the CSVs are
rendered with repr() and the JSON report round-trips floats exactly, so a
reload reproduces every numeric field bit-for-bit.  Stage timings are
deliberately kept out of the report and go to their own sidecar, because
the report itself must be byte-identical across same-seed runs.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .selection import SweepResult

REPORT_FILE = "report.json"
SWEEP_FILE = "sweep.csv"
METRICS_FILE = "metrics.csv"
COST_TRACE_FILE = "cost_trace.csv"
TIMINGS_FILE = "timings.csv"

METRIC_COLUMNS = ("rand", "ha", "ma", "fm", "jaccard", "majority_accuracy")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_csv_rows(path, fieldnames, rows) -> Path:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames)
    w.writeheader()
    for row in rows:
        w.writerow({k: _render(row.get(k)) for k in fieldnames})
    return atomic_write_text(path, buf.getvalue())


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class RunReport:
    """Everything one pipeline run produced, ready for serialization."""

    config: dict
    embedding: Optional[dict]  # final KL, iterations, skipped flag
    sweep_rows: list[dict]
    best: dict[str, dict]
    metrics_rows: list[dict]
    warnings: list[str]
    timings: list[tuple[str, float]] = field(default_factory=list)
    cost_trace: Optional[np.ndarray] = None

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "embedding": self.embedding,
            "sweep": self.sweep_rows,
            "best_models": self.best,
            "metrics": self.metrics_rows,
            "warnings": self.warnings,
        }


def sweep_rows(result: SweepResult) -> list[dict]:
    rows = []
    for cell in result.cells:
        row: dict = {"G": cell.G, "model": cell.model, "status": cell.status}
        if cell.status == "OK":
            row["loglik"] = cell.criteria.loglik
            row["n_params"] = cell.criteria.n_params
            for name in result.criteria_names:
                row[name] = cell.criteria.values.get(name)
            row["reason"] = None
        else:
            row["loglik"] = None
            row["n_params"] = None
            for name in result.criteria_names:
                row[name] = None
            row["reason"] = cell.reason
        rows.append(row)
    return rows


def best_summary(result: SweepResult) -> dict[str, dict]:
    out = {}
    for name, cell in result.best.items():
        out[name] = {
            "G": cell.G,
            "model": cell.model,
            "value": cell.criteria.values[name],
        }
    return out


def emit_report(report: RunReport, out_dir) -> dict[str, Path]:
    """Write report.json plus the flat CSVs; returns the paths written.

    The metrics CSV appears only when metric rows exist, the cost-trace CSV
    only when an embedding ran, the timings sidecar only when timings were
    recorded.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    text = json.dumps(report.to_json_dict(), indent=2, allow_nan=False)
    paths["report"] = atomic_write_text(out_dir / REPORT_FILE, text + "\n")

    sweep_fields = ["G", "model", "status", "loglik", "n_params"]
    criteria_names = [
        k for k in (report.sweep_rows[0].keys() if report.sweep_rows else [])
        if k not in ("G", "model", "status", "loglik", "n_params", "reason")
    ]
    sweep_fields += criteria_names + ["reason"]
    paths["sweep"] = write_csv_rows(out_dir / SWEEP_FILE, sweep_fields, report.sweep_rows)

    if report.metrics_rows:
        fields = ["G", "model"] + list(METRIC_COLUMNS)
        paths["metrics"] = write_csv_rows(out_dir / METRICS_FILE, fields, report.metrics_rows)

    if report.cost_trace is not None:
        rows = [{"iteration": i, "cost": c} for i, c in enumerate(report.cost_trace)]
        paths["cost_trace"] = write_csv_rows(out_dir / COST_TRACE_FILE, ["iteration", "cost"], rows)

    if report.timings:
        rows = [{"stage": s, "seconds": t} for s, t in report.timings]
        paths["timings"] = write_csv_rows(out_dir / TIMINGS_FILE, ["stage", "seconds"], rows)
    return paths


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
