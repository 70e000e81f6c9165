"""Exact t-SNE: perplexity-calibrated affinities, Student-t kernel, KL cost,
analytic gradient, momentum gradient descent.

All pairwise quantities are dense N x N; only the exact O(N^2) gradient is
implemented (tree approximations are out of scope, so theta must be 0).
Probabilities are floored at FLOOR before logs and divisions; the stored
affinity matrices themselves are kept exact so they sum to 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import validate_matrix
from .errors import ConfigError, DegeneracyError
from .rng import RandomSource

FLOOR = 1e-12

LOG2 = np.log(2.0)


@dataclass
class AffinityMatrix:
    """N x N pairwise affinities, either row-conditional or joint."""

    values: np.ndarray
    kind: str  # "conditional" | "joint"

    def __post_init__(self):
        if self.kind not in ("conditional", "joint"):
            raise ConfigError(f"unknown affinity kind {self.kind!r}")


@dataclass
class TsneConfig:
    perplexity: float
    max_iterations: int = 1000
    output_dim: int = 2
    theta: float = 0.0
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: Optional[int] = None  # None -> min(250, max_iterations // 4)
    init_sd: float = 1e-4
    seed: RandomSource = field(default_factory=lambda: RandomSource(0))
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    entropy_tol: float = 1e-4
    max_bisection: int = 64

    def __post_init__(self):
        if self.perplexity <= 1:
            raise ConfigError("perplexity must exceed 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.output_dim < 1:
            raise ConfigError("output_dim must be positive")
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError("theta must lie in [0, 1)")
        if self.theta != 0.0:
            raise ConfigError(
                "only the exact gradient (theta = 0) is implemented; "
                "tree-approximated gradients are not available"
            )
        if self.early_exaggeration_factor < 1.0:
            raise ConfigError("early_exaggeration_factor must be >= 1")
        if self.init_sd <= 0:
            raise ConfigError("init_sd must be positive")

    @property
    def exaggeration_iters(self) -> int:
        if self.early_exaggeration_iters is None:
            return min(250, self.max_iterations // 4)
        return int(self.early_exaggeration_iters)


@dataclass
class EmbeddingState:
    """Low-dimensional map plus optimizer history."""

    Y: np.ndarray
    Y_prev: np.ndarray
    iteration: int
    cost_trace: np.ndarray
    learning_rate: float
    momentum_early: float
    momentum_late: float
    momentum_switch_iter: int

    def momentum(self, t: int) -> float:
        return self.momentum_early if t < self.momentum_switch_iter else self.momentum_late


def pairwise_sq_distances(X) -> np.ndarray:
    """Squared Euclidean distances, symmetric with a zero diagonal."""
    X = validate_matrix(X)
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy_bits(neg_dist: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (bits) and probabilities of exp(beta * neg_dist) / Z.

    neg_dist holds -D_ij for j != i.  Computed with a max shift so large
    beta * D never underflows the whole row to zero.
    """
    logits = beta * neg_dist
    shift = logits.max()
    w = np.exp(logits - shift)
    s = w.sum()
    p = w / s
    # H = -sum p log p = log s - sum p (logits - shift), in nats
    h_nats = np.log(s) - float(np.dot(p, logits - shift))
    return h_nats / LOG2, p


def conditional_affinities(
    D: np.ndarray,
    perplexity: float,
    tol: float = 1e-4,
    max_bisection: int = 64,
) -> tuple[AffinityMatrix, np.ndarray]:
    """Calibrate one precision beta_i = 1/(2 sigma_i^2) per row so that the
    row entropy matches log2(perplexity) within tol bits.

    Bracket by doubling/halving, then bisect.  Returns the conditional
    affinities (zero diagonal, rows summing to 1) and the per-row betas.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ConfigError("distance matrix must be square")
    if not 1.0 < perplexity < n:
        raise ConfigError(f"perplexity must lie in (1, N); got {perplexity} with N={n}")
    target = np.log2(perplexity)

    P = np.zeros((n, n))
    betas = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        off = idx != i
        neg_dist = -D[i, off]
        if np.max(-neg_dist) == 0.0:
            raise DegeneracyError(
                f"row {i} has all-zero distances (duplicate points); cannot calibrate"
            )
        beta = 1.0
        h, p = _row_entropy_bits(neg_dist, beta)
        lo = hi = None
        if h > target:  # too spread out: raise beta
            for _ in range(max_bisection):
                lo, beta = beta, beta * 2.0
                h, p = _row_entropy_bits(neg_dist, beta)
                if h <= target:
                    hi = beta
                    break
        else:
            for _ in range(max_bisection):
                hi, beta = beta, beta / 2.0
                h, p = _row_entropy_bits(neg_dist, beta)
                if h >= target:
                    lo = beta
                    break
        if lo is not None and hi is not None:
            # aim for half the tolerance so an independent entropy
            # recomputation still lands within tol despite rounding
            for _ in range(max_bisection):
                if abs(h - target) <= 0.5 * tol:
                    break
                mid = 0.5 * (lo + hi)
                h_mid, p_mid = _row_entropy_bits(neg_dist, mid)
                if h_mid > target:
                    lo = mid
                else:
                    hi = mid
                beta, h, p = mid, h_mid, p_mid
        P[i, off] = p
        betas[i] = beta
    return AffinityMatrix(P, "conditional"), betas


def symmetrize(P_cond: AffinityMatrix) -> AffinityMatrix:
    """Joint affinities p_ij = (p_j|i + p_i|j) / (2N); symmetric, total sum 1."""
    if P_cond.kind != "conditional":
        raise ConfigError("symmetrize expects conditional affinities")
    C = P_cond.values
    n = C.shape[0]
    P = (C + C.T) / (2.0 * n)
    return AffinityMatrix(P, "joint")


def low_dim_affinities(Y) -> tuple[AffinityMatrix, np.ndarray]:
    """Student-t (one degree of freedom) joint affinities of the map Y.

    Returns the normalized q_ij and the unnormalized kernel
    (1 + ||y_i - y_j||^2)^-1 needed by the gradient.
    """
    Y = validate_matrix(Y, "Y")
    D = pairwise_sq_distances(Y)
    W = 1.0 / (1.0 + D)
    np.fill_diagonal(W, 0.0)
    Q = W / W.sum()
    return AffinityMatrix(Q, "joint"), W


def kl_cost(P: AffinityMatrix, Q: AffinityMatrix) -> float:
    """C = sum_{i != j} p log(p / q), with 0 log 0 = 0 and floors before logs."""
    if P.kind != "joint" or Q.kind != "joint":
        raise ConfigError("kl_cost expects joint affinities")
    p, q = P.values, Q.values
    if p.shape != q.shape:
        raise ConfigError("affinity shapes differ")
    mask = p > 0.0
    pm = p[mask]
    return float(np.sum(pm * (np.log(np.maximum(pm, FLOOR)) - np.log(np.maximum(q[mask], FLOOR)))))


def tsne_gradient(P: AffinityMatrix, Q: AffinityMatrix, kernel: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """dC/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) (1 + ||y_i - y_j||^2)^-1."""
    M = (P.values - Q.values) * kernel
    return 4.0 * (Y * M.sum(axis=1)[:, None] - M @ Y)


def embed(
    X,
    cfg: TsneConfig,
    cost_trace_path=None,
    snapshot_every: Optional[int] = None,
    snapshot_dir=None,
) -> EmbeddingState:
    """Run the full t-SNE loop and return the final map with its cost trace.

    Distances -> per-row calibration -> symmetrization -> momentum descent,
    with the high-dimensional affinities multiplied by the exaggeration
    factor for the first cfg.exaggeration_iters iterations.  The gradient is
    applied with a negative sign (descent on the KL cost).  Optionally
    streams (iteration, cost) rows to a CSV and dumps Y snapshots every
    snapshot_every iterations.
    """
    X = validate_matrix(X)
    n = X.shape[0]
    if n < 4:
        raise ConfigError("embedding needs at least 4 points")
    if not cfg.perplexity < n:
        raise ConfigError(f"perplexity {cfg.perplexity} must be below N={n}")

    D = pairwise_sq_distances(X)
    P_cond, _ = conditional_affinities(D, cfg.perplexity, cfg.entropy_tol, cfg.max_bisection)
    P = symmetrize(P_cond).values

    gen = cfg.seed.generator()
    Y = gen.normal(0.0, cfg.init_sd, size=(n, cfg.output_dim))
    Y_prev = Y.copy()

    ee_iters = cfg.exaggeration_iters
    trace = np.empty(cfg.max_iterations)

    trace_fh = None
    trace_writer = None
    if cost_trace_path is not None:
        trace_fh = open(cost_trace_path, "w", newline="", encoding="utf-8")
        trace_writer = csv.writer(trace_fh)
        trace_writer.writerow(["iteration", "cost"])
    if snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)

    try:
        for t in range(cfg.max_iterations):
            P_t = P * cfg.early_exaggeration_factor if t < ee_iters else P
            P_run = AffinityMatrix(P_t, "joint")
            Q, W = low_dim_affinities(Y)
            cost = kl_cost(P_run, Q)
            trace[t] = cost
            if trace_writer is not None:
                trace_writer.writerow([t, repr(cost)])
            if snapshot_every and t % snapshot_every == 0 and snapshot_dir is not None:
                _write_snapshot(Y, Path(snapshot_dir) / f"snapshot_{t:06d}.csv")

            grad = tsne_gradient(P_run, Q, W, Y)
            alpha = cfg.momentum_early if t < cfg.momentum_switch_iter else cfg.momentum_late
            Y_next = Y - cfg.learning_rate * grad + alpha * (Y - Y_prev)
            if not np.all(np.isfinite(Y_next)):
                raise DegeneracyError(f"map became non-finite at iteration {t}")
            Y_prev, Y = Y, Y_next
    finally:
        if trace_fh is not None:
            trace_fh.close()

    return EmbeddingState(
        Y=Y,
        Y_prev=Y_prev,
        iteration=cfg.max_iterations,
        cost_trace=trace,
        learning_rate=cfg.learning_rate,
        momentum_early=cfg.momentum_early,
        momentum_late=cfg.momentum_late,
        momentum_switch_iter=cfg.momentum_switch_iter,
    )


def _write_snapshot(Y: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"y{k + 1}" for k in range(Y.shape[1])])
        for i, row in enumerate(Y):
            w.writerow([i] + [repr(float(v)) for v in row])
