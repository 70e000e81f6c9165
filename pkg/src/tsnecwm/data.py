"""Dataset ingestion, response transformation and standardization.

CSV conventions: comma separated, optional single header row, UTF-8, '.'
decimal point.  Label columns may be categorical strings; they are recoded
to integers 1..K in first-appearance order and the mapping is kept on the
dataset (and written as a two-column sidecar by the pipeline).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError
from .rng import RandomSource

ColumnSpec = Union[int, str]


def validate_matrix(values, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array with N >= 1 rows and d >= 1 columns."""
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"{name} must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{name} contains a non-finite entry at row {bad[0]}, column {bad[1]}")
    return X


@dataclass
class LabeledDataset:
    """Feature matrix with an optional continuous response and reference labels."""

    features: np.ndarray
    response: Optional[np.ndarray] = None
    reference_labels: Optional[np.ndarray] = None
    feature_names: Optional[list[str]] = None
    response_name: Optional[str] = None
    label_name: Optional[str] = None
    label_mapping: Optional[list[tuple[str, int]]] = field(default=None)

    def __post_init__(self):
        self.features = validate_matrix(self.features, "features")
        n = self.features.shape[0]
        if self.response is not None:
            self.response = np.asarray(self.response, dtype=np.float64)
            if self.response.shape != (n,):
                raise DataError(f"response length {self.response.shape} does not match N={n}")
            if not np.all(np.isfinite(self.response)):
                raise DataError("response contains non-finite values")
        if self.reference_labels is not None:
            self.reference_labels = np.asarray(self.reference_labels, dtype=np.int64)
            if self.reference_labels.shape != (n,):
                raise DataError(f"reference_labels length does not match N={n}")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]


def _resolve_column(spec: ColumnSpec, header: Optional[list[str]], width: int) -> int:
    if isinstance(spec, str):
        if header is None:
            raise ConfigError(f"column {spec!r} referenced by name but the file has no header")
        try:
            return header.index(spec)
        except ValueError:
            raise ConfigError(f"column {spec!r} not found in header {header}") from None
    idx = int(spec)
    if not 0 <= idx < width:
        raise ConfigError(f"column index {idx} out of range for {width} columns")
    return idx


def load_csv(
    path,
    feature_columns: Optional[Sequence[ColumnSpec]] = None,
    response_column: Optional[ColumnSpec] = None,
    label_column: Optional[ColumnSpec] = None,
    has_header: bool = True,
) -> LabeledDataset:
    """Read a delimited dataset.

    feature_columns=None selects every column not claimed as response or
    label.  Numeric cells that fail to parse raise DataError with their
    (1-based) data row and column name.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty file: {path}")

    header = [c.strip() for c in rows[0]] if has_header else None
    data_rows = rows[1:] if has_header else rows
    if not data_rows:
        raise DataError(f"no data rows in {path}")
    width = len(data_rows[0])
    for i, row in enumerate(data_rows):
        if len(row) != width:
            raise DataError(f"ragged row {i + 1}: expected {width} cells, got {len(row)}")

    col_names = header if header is not None else [f"col{i}" for i in range(width)]
    resp_idx = None if response_column is None else _resolve_column(response_column, header, width)
    label_idx = None if label_column is None else _resolve_column(label_column, header, width)
    if feature_columns is None:
        feat_idx = [i for i in range(width) if i not in (resp_idx, label_idx)]
    else:
        feat_idx = [_resolve_column(c, header, width) for c in feature_columns]
    if not feat_idx:
        raise ConfigError("no feature columns selected")

    def parse_numeric(cell: str, row_i: int, col_i: int) -> float:
        try:
            return float(cell)
        except ValueError:
            raise DataError(
                f"non-numeric cell {cell!r} at row {row_i + 1}, column {col_names[col_i]!r}"
            ) from None

    n = len(data_rows)
    X = np.empty((n, len(feat_idx)))
    for i, row in enumerate(data_rows):
        for k, j in enumerate(feat_idx):
            X[i, k] = parse_numeric(row[j].strip(), i, j)

    response = None
    if resp_idx is not None:
        response = np.array(
            [parse_numeric(row[resp_idx].strip(), i, resp_idx) for i, row in enumerate(data_rows)]
        )

    labels = None
    mapping = None
    if label_idx is not None:
        codes: dict[str, int] = {}
        labels = np.empty(n, dtype=np.int64)
        for i, row in enumerate(data_rows):
            raw = row[label_idx].strip()
            if raw not in codes:
                codes[raw] = len(codes) + 1
            labels[i] = codes[raw]
        mapping = list(codes.items())

    return LabeledDataset(
        features=X,
        response=response,
        reference_labels=labels,
        feature_names=[col_names[j] for j in feat_idx],
        response_name=None if resp_idx is None else col_names[resp_idx],
        label_name=None if label_idx is None else col_names[label_idx],
        label_mapping=mapping,
    )


def write_csv(dataset: LabeledDataset, path) -> None:
    """Write features (+ response, + label codes) back out.

    Floats are rendered with repr(), the shortest decimal that round-trips
    bit-exactly, so load_csv(write_csv(ds)) reproduces values exactly.
    """
    names = dataset.feature_names or [f"x{k + 1}" for k in range(dataset.n_cols)]
    header = list(names)
    if dataset.response is not None:
        header.append(dataset.response_name or "y")
    if dataset.reference_labels is not None:
        header.append(dataset.label_name or "label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(dataset.n_rows):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.response is not None:
                row.append(repr(float(dataset.response[i])))
            if dataset.reference_labels is not None:
                row.append(str(int(dataset.reference_labels[i])))
            w.writerow(row)


def write_label_mapping(mapping: list[tuple[str, int]], path) -> None:
    """Two-column sidecar: original_label, integer_code."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["original_label", "integer_code"])
        for original, code in mapping:
            w.writerow([original, code])


def transform_labels(
    labels,
    offset: float = 0.5,
    noise_sd: float = 0.01,
    rng: Optional[RandomSource] = None,
) -> np.ndarray:
    """Map integer class labels to a continuous response: ln(label + offset) + noise.

    noise_sd = 0 gives the deterministic transform; otherwise Gaussian noise
    with the given sd is drawn from rng.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if noise_sd < 0:
        raise ConfigError("noise_sd must be non-negative")
    if np.any(labels + offset <= 0):
        bad = int(labels[np.argmax(labels + offset <= 0)])
        raise DataError(f"label {bad} is <= {-offset}; logarithm undefined")
    y = np.log(labels + offset)
    if noise_sd > 0:
        if rng is None:
            raise ConfigError("noise_sd > 0 requires a RandomSource")
        y = y + rng.generator().normal(0.0, noise_sd, size=labels.shape[0])
    return y


@dataclass
class StandardizeResult:
    values: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    dropped: tuple[int, ...] = ()


def standardize(X, constant_policy: str = "error") -> StandardizeResult:
    """Center to mean 0 and scale to sample sd 1 (divisor N-1) per column.

    Constant columns either raise (policy "error") or are removed
    (policy "drop"); the result records which indices were dropped.
    """
    if constant_policy not in ("error", "drop"):
        raise ConfigError(f"unknown constant-column policy {constant_policy!r}")
    X = validate_matrix(X)
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    constant = sd == 0.0
    if np.any(constant):
        cols = tuple(int(c) for c in np.flatnonzero(constant))
        if constant_policy == "error":
            raise DataError(f"constant column(s) {cols} cannot be standardized")
        keep = ~constant
        if not np.any(keep):
            raise DataError("all columns are constant; nothing left after dropping")
        return StandardizeResult(
            values=(X[:, keep] - mean[keep]) / sd[keep],
            mean=mean[keep],
            sd=sd[keep],
            dropped=cols,
        )
    return StandardizeResult(values=(X - mean) / sd, mean=mean, sd=sd)
