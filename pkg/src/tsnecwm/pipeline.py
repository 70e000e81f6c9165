"""End-to-end orchestration: load -> standardize -> embed -> transform ->
sweep -> metrics -> report.

The master seed fans out deterministically: child 0 seeds the embedding,
child 1 the label-noise draw, child 2 the sweep.  Identical (config, seed)
therefore produce byte-identical artifacts; stage timings, which cannot be
deterministic, go to their own sidecar file.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import plots
from .cwm import FitResult
from .data import LabeledDataset, load_csv, standardize, transform_labels, write_label_mapping
from .errors import ConfigError, DataError
from .metrics import score_partitions
from .report import (
    TIMINGS_FILE,
    RunReport,
    atomic_write_text,
    best_summary,
    emit_report,
    sweep_rows,
    write_csv_rows,
)
from .rng import RandomSource
from .selection import CRITERIA, FitConfig, SweepResult, resolve_models, sweep
from .tsne import TsneConfig, embed

EMBEDDING_FILE = "embedding.csv"
LABEL_MAPPING_FILE = "label_mapping.csv"
BEST_FIT_LABELS_FILE = "best_fit_labels.csv"


@dataclass
class TsneSection:
    perplexity: float = 30.0
    max_iterations: int = 1000
    output_dim: int = 2
    theta: float = 0.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: Optional[int] = None
    init_sd: float = 1e-4
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    skip_if_dim_at_most: int = 3


@dataclass
class CwmSection:
    g_range: tuple[int, int] = (1, 3)
    g_values: Optional[list[int]] = None
    models: object = "all"
    n_starts: int = 5
    max_iter: int = 500
    tol: float = 1e-8
    init_strategy: str = "kmeans_like"

    def component_counts(self) -> list[int]:
        if self.g_values:
            return sorted(set(int(g) for g in self.g_values))
        lo, hi = int(self.g_range[0]), int(self.g_range[1])
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid g_range {self.g_range}")
        return list(range(lo, hi + 1))


@dataclass
class LabelTransformSection:
    offset: float = 0.5
    noise_sd: float = 0.01


@dataclass
class PipelineConfig:
    dataset_path: str
    feature_columns: Optional[list] = None
    response_column: object = None
    label_column: object = None
    has_header: bool = True
    standardize: bool = True
    constant_column_policy: str = "error"
    tsne: TsneSection = field(default_factory=TsneSection)
    cwm: CwmSection = field(default_factory=CwmSection)
    label_transform: LabelTransformSection = field(default_factory=LabelTransformSection)
    criteria: tuple[str, ...] = CRITERIA
    output_dir: str = "tsnecwm_out"
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw or {})
        try:
            dataset = dict(raw.pop("dataset"))
        except KeyError:
            raise ConfigError("config needs a 'dataset' section with a 'path'") from None
        path = dataset.pop("path", None)
        if path is None:
            raise ConfigError("dataset section needs a 'path'")
        kwargs = {
            "dataset_path": str(path),
            "feature_columns": dataset.pop("feature_columns", None),
            "response_column": dataset.pop("response_column", None),
            "label_column": dataset.pop("label_column", None),
            "has_header": bool(dataset.pop("has_header", True)),
        }
        if dataset:
            raise ConfigError(f"unknown dataset keys: {sorted(dataset)}")
        for section, typ in (
            ("tsne", TsneSection),
            ("cwm", CwmSection),
            ("label_transform", LabelTransformSection),
        ):
            sub = dict(raw.pop(section, {}) or {})
            if section == "cwm" and "g_range" in sub:
                sub["g_range"] = tuple(sub["g_range"])
            known = set(typ.__dataclass_fields__)
            unknown = set(sub) - known
            if unknown:
                raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
            kwargs[section] = typ(**sub)
        for key in ("standardize", "constant_column_policy", "output_dir", "seed"):
            if key in raw:
                kwargs[key] = raw.pop(key)
        if "criteria" in raw:
            kwargs["criteria"] = tuple(raw.pop("criteria"))
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        cfg = cls(**kwargs)
        resolve_models(cfg.cwm.models)
        cfg.cwm.component_counts()
        for name in cfg.criteria:
            if name not in CRITERIA:
                raise ConfigError(f"unknown criterion {name!r}")
        return cfg

    def echo(self) -> dict:
        return {
            "dataset": {
                "path": self.dataset_path,
                "feature_columns": self.feature_columns,
                "response_column": self.response_column,
                "label_column": self.label_column,
                "has_header": self.has_header,
            },
            "standardize": self.standardize,
            "constant_column_policy": self.constant_column_policy,
            "tsne": dict(self.tsne.__dict__),
            "cwm": {**self.cwm.__dict__, "g_range": list(self.cwm.g_range)},
            "label_transform": dict(self.label_transform.__dict__),
            "criteria": list(self.criteria),
            "output_dir": str(self.output_dir),
            "seed": int(self.seed),
        }


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return PipelineConfig.from_dict(raw)


class _Stages:
    """Collects per-stage wall time and prefixes failures with the stage name."""

    def __init__(self):
        self.timings: list[tuple[str, float]] = []

    def run(self, name: str, func):
        start = time.perf_counter()
        try:
            result = func()
        except Exception as exc:
            raise type(exc)(f"stage '{name}': {exc}") from exc
        self.timings.append((name, time.perf_counter() - start))
        return result


def write_embedding_csv(Y: np.ndarray, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["row"] + [f"y{k + 1}" for k in range(Y.shape[1])])
    for i, row in enumerate(Y):
        w.writerow([i] + [repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def write_fit_labels(result: FitResult, path) -> None:
    """CSV with one row per observation: row, hard_label, r_1..r_G."""
    G = result.params.G
    fields = ["row", "hard_label"] + [f"r_{g + 1}" for g in range(G)]
    rows = []
    for i in range(result.N):
        row = {"row": i, "hard_label": int(result.hard_labels[i])}
        for g in range(G):
            row[f"r_{g + 1}"] = result.responsibilities[i, g]
        rows.append(row)
    write_csv_rows(path, fields, rows)


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Execute the full pipeline and write all artifacts under cfg.output_dir.

    Stage failures abort with the stage name attached; artifacts written by
    earlier stages stay in place.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = RandomSource(int(cfg.seed))
    stages = _Stages()
    warnings: list[str] = []

    dataset = stages.run(
        "load",
        lambda: load_csv(
            cfg.dataset_path,
            feature_columns=cfg.feature_columns,
            response_column=cfg.response_column,
            label_column=cfg.label_column,
            has_header=cfg.has_header,
        ),
    )
    if dataset.label_mapping:
        write_label_mapping(dataset.label_mapping, out_dir / LABEL_MAPPING_FILE)

    features = dataset.features
    if cfg.standardize:
        def _standardize():
            return standardize(features, cfg.constant_column_policy)

        std = stages.run("standardize", _standardize)
        if std.dropped:
            warnings.append(f"standardize: dropped constant column(s) {list(std.dropped)}")
        features = std.values

    tsne_cfg = cfg.tsne
    embedding_summary: dict
    cost_trace = None
    if features.shape[1] <= tsne_cfg.skip_if_dim_at_most:
        warnings.append(
            f"embed: skipped (d={features.shape[1]} <= threshold {tsne_cfg.skip_if_dim_at_most})"
        )
        embedding_summary = {"skipped": True, "final_cost": None, "iterations": 0}
        x_features = features
    else:
        theta = tsne_cfg.theta
        if theta != 0.0:
            warnings.append(f"embed: theta={theta} forced to 0 (only the exact gradient is built)")
            theta = 0.0

        def _embed():
            tc = TsneConfig(
                perplexity=tsne_cfg.perplexity,
                max_iterations=tsne_cfg.max_iterations,
                output_dim=tsne_cfg.output_dim,
                theta=theta,
                early_exaggeration_factor=tsne_cfg.early_exaggeration_factor,
                early_exaggeration_iters=tsne_cfg.early_exaggeration_iters,
                init_sd=tsne_cfg.init_sd,
                seed=master.child(0),
                learning_rate=tsne_cfg.learning_rate,
                momentum_early=tsne_cfg.momentum_early,
                momentum_late=tsne_cfg.momentum_late,
                momentum_switch_iter=tsne_cfg.momentum_switch_iter,
            )
            return embed(features, tc)

        state = stages.run("embed", _embed)
        x_features = state.Y
        cost_trace = state.cost_trace
        embedding_summary = {
            "skipped": False,
            "final_cost": float(state.cost_trace[-1]),
            "iterations": int(state.iteration),
            "perplexity": float(tsne_cfg.perplexity),
        }
        write_embedding_csv(state.Y, out_dir / EMBEDDING_FILE)

    def _response():
        if dataset.response is not None:
            return dataset.response
        if dataset.reference_labels is not None:
            return transform_labels(
                dataset.reference_labels,
                offset=cfg.label_transform.offset,
                noise_sd=cfg.label_transform.noise_sd,
                rng=master.child(1),
            )
        raise DataError("dataset has neither a response column nor a label column")

    response = stages.run("transform", _response)

    cwm_data = LabeledDataset(
        features=x_features,
        response=response,
        reference_labels=dataset.reference_labels,
    )

    def _sweep() -> SweepResult:
        return sweep(
            cwm_data,
            cfg.cwm.component_counts(),
            models=cfg.cwm.models,
            fit_config=FitConfig(
                n_starts=cfg.cwm.n_starts,
                max_iter=cfg.cwm.max_iter,
                tol=cfg.cwm.tol,
                init_strategy=cfg.cwm.init_strategy,
            ),
            rng=master.child(2),
            criteria=cfg.criteria,
        )

    sweep_result = stages.run("sweep", _sweep)
    for cell in sweep_result.cells:
        if cell.status == "OK" and cell.fit.regularized:
            warnings.append(f"sweep: cell (G={cell.G}, {cell.model}) required regularization")
        if cell.status == "OK" and cell.fit.n_reseeds:
            warnings.append(
                f"sweep: cell (G={cell.G}, {cell.model}) re-seeded empty components "
                f"{cell.fit.n_reseeds} time(s)"
            )

    def _metrics():
        rows = []
        if cwm_data.reference_labels is None:
            return rows
        for cell in sweep_result.cells:
            if cell.status != "OK":
                continue
            scores = score_partitions(cell.fit.hard_labels, cwm_data.reference_labels)
            rows.append({"G": cell.G, "model": cell.model, **scores})
        return rows

    metrics_rows = stages.run("metrics", _metrics)

    report = RunReport(
        config=cfg.echo(),
        embedding=embedding_summary,
        sweep_rows=sweep_rows(sweep_result),
        best=best_summary(sweep_result),
        metrics_rows=metrics_rows,
        warnings=warnings,
        cost_trace=cost_trace,
    )

    def _emit():
        emit_report(report, out_dir)
        plot_criterion = "BIC" if "BIC" in cfg.criteria else cfg.criteria[0]
        plots.emit_criterion_curves(
            sweep_result.cells, plot_criterion, out_dir / f"sweep_{plot_criterion.lower()}.svg"
        )
        if cost_trace is not None:
            plots.emit_cost_trace(cost_trace, out_dir / "tsne_cost.svg")
        best_cell = sweep_result.best.get(plot_criterion)
        if best_cell is not None:
            write_fit_labels(best_cell.fit, out_dir / BEST_FIT_LABELS_FILE)
        if x_features.shape[1] == 2:
            if cwm_data.reference_labels is not None:
                plots.emit_scatter(
                    x_features,
                    cwm_data.reference_labels,
                    out_dir / "embedding_reference.svg",
                    title="map colored by reference label",
                )
            if best_cell is not None:
                plots.emit_scatter(
                    x_features,
                    best_cell.fit.hard_labels,
                    out_dir / "embedding_clusters.svg",
                    title=f"map colored by fitted cluster "
                    f"(G={best_cell.G}, {best_cell.model}, best {plot_criterion})",
                    label_name="cluster",
                )

    stages.run("report", _emit)
    report.timings = stages.timings
    # Timings are wall-clock and cannot be reproducible; they live in their
    # own sidecar so report.json stays byte-identical across same-seed runs.
    write_csv_rows(
        out_dir / TIMINGS_FILE,
        ["stage", "seconds"],
        [{"stage": s, "seconds": t} for s, t in stages.timings],
    )
    return report
