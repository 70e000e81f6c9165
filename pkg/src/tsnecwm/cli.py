"""Command-line interface.

Subcommands: embed, fit, sweep, metrics, pipeline.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical degeneracy.  The default
output directory comes from $TSNECWM_OUTPUT_DIR when set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import plots
from .cwm import fit
from .data import LabeledDataset, load_csv, standardize, transform_labels
from .errors import ConfigError, DataError, DegeneracyError
from .metrics import score_partitions
from .pipeline import (
    EMBEDDING_FILE,
    write_embedding_csv,
    load_config,
    run_pipeline,
    write_fit_labels,
)
from .report import atomic_write_text, best_summary, sweep_rows, write_csv_rows
from .rng import RandomSource
from .selection import FitConfig, sweep
from .tsne import TsneConfig, embed


def _default_output_dir() -> str:
    return os.environ.get("TSNECWM_OUTPUT_DIR", "tsnecwm_out")


def _parse_columns(spec: str | None):
    if spec is None:
        return None
    cols = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        cols.append(int(token) if token.lstrip("-").isdigit() else token)
    if not cols:
        raise ConfigError("empty column list")
    return cols


def _parse_column(spec: str | None):
    if spec is None:
        return None
    spec = spec.strip()
    return int(spec) if spec.lstrip("-").isdigit() else spec


def _load_features(args):
    dataset = load_csv(
        args.input,
        feature_columns=_parse_columns(args.features),
        response_column=_parse_column(getattr(args, "response", None)),
        label_column=_parse_column(getattr(args, "label", None)),
        has_header=args.has_header,
    )
    features = dataset.features
    if args.standardize:
        features = standardize(features, "error").values
    return dataset, features


def _resolve_response(dataset, args, rng: RandomSource):
    if dataset.response is not None:
        return dataset.response
    if dataset.reference_labels is not None:
        return transform_labels(
            dataset.reference_labels, offset=args.offset, noise_sd=args.noise_sd, rng=rng
        )
    raise ConfigError("provide --response or --label so the model has an output variable")


def _cmd_embed(args) -> int:
    dataset, features = _load_features(args)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TsneConfig(
        perplexity=args.perplexity,
        max_iterations=args.iterations,
        output_dim=args.output_dim,
        theta=args.theta,
        init_sd=args.init_sd,
        learning_rate=args.learning_rate,
        seed=RandomSource(args.seed),
    )
    state = embed(
        features,
        cfg,
        cost_trace_path=out / "cost_trace.csv",
        snapshot_every=args.snapshot_every,
        snapshot_dir=out / "snapshots" if args.snapshot_every else None,
    )
    write_embedding_csv(state.Y, out / EMBEDDING_FILE)
    plots.emit_cost_trace(state.cost_trace, out / "tsne_cost.svg")
    if state.Y.shape[1] == 2 and dataset.reference_labels is not None:
        plots.emit_scatter(
            state.Y,
            dataset.reference_labels,
            out / "embedding_reference.svg",
            title="map colored by reference label",
        )
    print(f"embedded {features.shape[0]} points: final cost {state.cost_trace[-1]:.6f}")
    print(f"wrote {out / EMBEDDING_FILE}")
    return 0


def _cmd_fit(args) -> int:
    dataset, features = _load_features(args)
    master = RandomSource(args.seed)
    response = _resolve_response(dataset, args, master.child(1))
    data = LabeledDataset(
        features=features, response=response, reference_labels=dataset.reference_labels
    )
    result = fit(
        data,
        args.g,
        cov_model=args.model,
        init_strategy=args.init,
        n_starts=args.n_starts,
        max_iter=args.max_iter,
        tol=args.tol,
        rng=master.child(2),
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = result.params
    payload = {
        "G": params.G,
        "cov_model": params.cov_model,
        "loglik": result.loglik,
        "converged": result.converged,
        "n_iterations": result.n_iterations,
        "regularized": result.regularized,
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "covariances": params.covariances.tolist(),
        "reg_coeffs": params.reg_coeffs.tolist(),
        "output_vars": params.output_vars.tolist(),
        "loglik_trace": result.loglik_trace.tolist(),
    }
    atomic_write_text(out / "fit_params.json", json.dumps(payload, indent=2) + "\n")
    write_fit_labels(result, out / "fit_labels.csv")
    print(
        f"fit G={args.g} {args.model}: loglik {result.loglik:.4f}, "
        f"{result.n_iterations} iterations, converged={result.converged}"
    )
    if dataset.reference_labels is not None:
        scores = score_partitions(result.hard_labels, dataset.reference_labels)
        print("scores vs reference labels: " + _format_scores(scores))
    print(f"wrote {out / 'fit_params.json'}")
    return 0


def _format_scores(scores: dict) -> str:
    return ", ".join(
        f"{k}={v:.4f}" if v is not None else f"{k}=NA" for k, v in scores.items()
    )


def _cmd_sweep(args) -> int:
    dataset, features = _load_features(args)
    master = RandomSource(args.seed)
    response = _resolve_response(dataset, args, master.child(1))
    data = LabeledDataset(
        features=features, response=response, reference_labels=dataset.reference_labels
    )
    models = "all" if args.models == "all" else [m.strip() for m in args.models.split(",")]
    result = sweep(
        data,
        range(args.g_min, args.g_max + 1),
        models=models,
        fit_config=FitConfig(
            n_starts=args.n_starts, max_iter=args.max_iter, tol=args.tol, init_strategy=args.init
        ),
        rng=master.child(2),
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_rows(result)
    fields = list(rows[0].keys())
    write_csv_rows(out / "sweep.csv", fields, rows)
    plots.emit_criterion_curves(result.cells, "BIC", out / "sweep_bic.svg")
    for name, info in best_summary(result).items():
        print(f"best by {name}: G={info['G']} {info['model']} ({info['value']:.4f})")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def _read_label_column(path, column, has_header: bool) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty file: {path}")
    header = [c.strip() for c in rows[0]] if has_header else None
    data = rows[1:] if has_header else rows
    col = _parse_column(column)
    if col is None:
        idx = 0
    elif isinstance(col, str):
        if header is None or col not in header:
            raise ConfigError(f"column {col!r} not found in {path}")
        idx = header.index(col)
    else:
        idx = col
    return [row[idx].strip() for row in data]


def _cmd_metrics(args) -> int:
    pred = _read_label_column(args.pred, args.pred_column, args.has_header)
    truth = _read_label_column(args.truth, args.truth_column, args.has_header)
    if len(pred) != len(truth):
        raise DataError(f"label counts differ: {len(pred)} vs {len(truth)}")
    scores = score_partitions(pred, truth)
    print(_format_scores(scores))
    if args.output:
        write_csv_rows(args.output, list(scores.keys()), [scores])
        print(f"wrote {args.output}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.perplexity is not None:
        cfg.tsne.perplexity = args.perplexity
    if args.iterations is not None:
        cfg.tsne.max_iterations = args.iterations
    if args.g_min is not None or args.g_max is not None:
        lo = args.g_min if args.g_min is not None else cfg.cwm.g_range[0]
        hi = args.g_max if args.g_max is not None else cfg.cwm.g_range[1]
        cfg.cwm.g_range = (lo, hi)
        cfg.cwm.g_values = None
    if args.models is not None:
        cfg.cwm.models = (
            "all" if args.models == "all" else [m.strip() for m in args.models.split(",")]
        )
    if args.n_starts is not None:
        cfg.cwm.n_starts = args.n_starts
    report = run_pipeline(cfg)
    out = Path(cfg.output_dir)
    if report.embedding and not report.embedding.get("skipped"):
        print(f"embedding: final cost {report.embedding['final_cost']:.6f}")
    for name, info in report.best.items():
        print(f"best by {name}: G={info['G']} {info['model']} ({info['value']:.4f})")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote report to {out}")
    return 0


def _add_io_options(p, with_response: bool):
    p.add_argument("--input", required=True, help="input CSV file")
    p.add_argument("--features", help="comma-separated feature columns (names or 0-based indices)")
    p.add_argument(
        "--has-header",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="whether the CSV has a header row",
    )
    p.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="center/scale features before use",
    )
    p.add_argument("--label", help="reference label column (categorical allowed)")
    if with_response:
        p.add_argument("--response", help="numeric response column")
        p.add_argument("--offset", type=float, default=0.5, help="label transform offset")
        p.add_argument("--noise-sd", type=float, default=0.01, help="label transform noise sd")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--output-dir", default=_default_output_dir(), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsnecwm",
        description="Exact t-SNE embedding plus parsimonious cluster-weighted model sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="run t-SNE on a CSV of features")
    _add_io_options(p, with_response=False)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--output-dim", type=int, default=2)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--init-sd", type=float, default=1e-4)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--snapshot-every", type=int, default=None)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("fit", help="fit a single cluster-weighted model")
    _add_io_options(p, with_response=True)
    p.add_argument("--g", type=int, required=True, help="number of components")
    p.add_argument("--model", default="VVV", help="covariance model code")
    p.add_argument("--n-starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--init", default="kmeans_like", choices=["random_rows", "kmeans_like"])
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sweep", help="fit a grid of (G, model) cells and rank by criteria")
    _add_io_options(p, with_response=True)
    p.add_argument("--g-min", type=int, default=1)
    p.add_argument("--g-max", type=int, default=8)
    p.add_argument("--models", default="all", help="'all' or comma-separated model codes")
    p.add_argument("--n-starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--init", default="kmeans_like", choices=["random_rows", "kmeans_like"])
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("metrics", help="score a predicted partition against reference labels")
    p.add_argument("--pred", required=True, help="CSV holding predicted labels")
    p.add_argument("--pred-column", help="column with predicted labels (default: first)")
    p.add_argument("--truth", required=True, help="CSV holding reference labels")
    p.add_argument("--truth-column", help="column with reference labels (default: first)")
    p.add_argument(
        "--has-header", action=argparse.BooleanOptionalAction, default=True
    )
    p.add_argument("--output", help="optional CSV to write the scores to")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("pipeline", help="run the full embed -> sweep -> report pipeline")
    p.add_argument("--config", required=True, help="YAML configuration file")
    p.add_argument("--output-dir", help="override the configured output directory")
    p.add_argument("--seed", type=int, help="override the configured master seed")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--g-min", type=int)
    p.add_argument("--g-max", type=int)
    p.add_argument("--models")
    p.add_argument("--n-starts", type=int)
    p.set_defaults(func=_cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DegeneracyError as exc:
        print(f"degeneracy: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
