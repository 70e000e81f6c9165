"""Information criteria over fitted CWMs and the (G, model) sweep.

All criteria are oriented so that larger is better; the sweep table
therefore selects by argmax.  Cells whose EM runs degenerate are recorded
as "Not Estimated" with a machine-readable reason instead of failing the
whole sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .covariances import MODEL_CODES, check_model_code, param_count
from .cwm import FitResult, fit
from .data import LabeledDataset
from .errors import ConfigError, DegeneracyError
from .rng import RandomSource

CRITERIA = ("AIC", "AICc", "AIC3", "AICu", "AWE", "BIC", "CAIC", "ICL")

NOT_ESTIMATED = "Not Estimated"


@dataclass
class CriteriaSet:
    values: dict[str, Optional[float]]
    n_params: int
    loglik: float
    N: int


@dataclass
class FitConfig:
    n_starts: int = 5
    max_iter: int = 500
    tol: float = 1e-8
    init_strategy: str = "kmeans_like"


def count_parameters(fit_result: FitResult) -> int:
    """Free parameters: (G-1) weights + G d means + covariance set
    + G (d+1) regression coefficients + G output variances."""
    p = fit_result.params
    return (
        (p.G - 1)
        + p.G * p.d
        + param_count(p.cov_model, p.d, p.G)
        + p.G * (p.d + 1)
        + p.G
    )


def information_criteria(
    fit_result: FitResult, criteria: Sequence[str] = CRITERIA
) -> CriteriaSet:
    """Evaluate the requested criteria (larger is better for all of them).

    AICc and AICu are undefined when N <= k + 1 and come back as None,
    not as a failure.  AWE and ICL use the hard (MAP) assignments: the
    complete-data log-likelihood is loglik + sum_i ln r_i,hard, and ICL adds
    twice that (non-positive) entropy term to BIC.
    """
    for name in criteria:
        if name not in CRITERIA:
            raise ConfigError(f"unknown criterion {name!r}; expected one of {CRITERIA}")
    k = count_parameters(fit_result)
    ll = fit_result.loglik
    n = fit_result.N
    resp = fit_result.responsibilities
    r_hard = resp[np.arange(n), fit_result.hard_labels - 1]
    entropy_term = float(np.sum(np.log(r_hard)))  # <= 0
    ll_complete = ll + entropy_term

    log_n = np.log(n)
    values: dict[str, Optional[float]] = {}
    small_sample_ok = n > k + 1
    for name in criteria:
        if name == "AIC":
            values[name] = 2.0 * ll - 2.0 * k
        elif name == "AIC3":
            values[name] = 2.0 * ll - 3.0 * k
        elif name == "AICc":
            values[name] = (
                2.0 * ll - 2.0 * k - 2.0 * k * (k + 1) / (n - k - 1) if small_sample_ok else None
            )
        elif name == "AICu":
            values[name] = (
                2.0 * ll - 2.0 * k - 2.0 * k * (k + 1) / (n - k - 1) - n * np.log(n / (n - k - 1.0))
                if small_sample_ok
                else None
            )
        elif name == "AWE":
            values[name] = 2.0 * ll_complete - 2.0 * k * (1.5 + log_n)
        elif name == "BIC":
            values[name] = 2.0 * ll - k * log_n
        elif name == "CAIC":
            values[name] = 2.0 * ll - k * (1.0 + log_n)
        elif name == "ICL":
            values[name] = 2.0 * ll - k * log_n + 2.0 * entropy_term
    return CriteriaSet(values=values, n_params=k, loglik=ll, N=n)


@dataclass
class SweepCell:
    G: int
    model: str
    status: str  # "OK" | "Not Estimated"
    criteria: Optional[CriteriaSet] = None
    fit: Optional[FitResult] = None
    reason: Optional[str] = None


@dataclass
class SweepResult:
    cells: list[SweepCell]
    criteria_names: tuple[str, ...]
    best: dict[str, SweepCell] = field(default_factory=dict)

    def cell(self, G: int, model: str) -> SweepCell:
        for c in self.cells:
            if c.G == G and c.model == model:
                return c
        raise KeyError((G, model))


def resolve_models(models) -> tuple[str, ...]:
    if models is None or models == "all":
        return MODEL_CODES
    out = tuple(check_model_code(m) for m in models)
    if not out:
        raise ConfigError("empty model list")
    return out


def sweep(
    data: LabeledDataset,
    G_values: Iterable[int],
    models=None,
    fit_config: FitConfig = FitConfig(),
    rng: RandomSource = RandomSource(0),
    criteria: Sequence[str] = CRITERIA,
) -> SweepResult:
    """Fit every (G, model) cell independently and rank by each criterion.

    Every cell draws its own child seed from its fixed grid position, so
    results do not depend on evaluation order.  A cell whose every EM start
    degenerates is marked "Not Estimated" with the failure reason.
    """
    G_list = sorted(set(int(g) for g in G_values))
    if not G_list or G_list[0] < 1:
        raise ConfigError("G range must be non-empty and positive")
    model_list = resolve_models(models)

    cells: list[SweepCell] = []
    for G, model in ((G, m) for G in G_list for m in model_list):
        # Seed from the cell's canonical grid position, not its evaluation
        # order, so results are identical for any sub-grid or ordering.
        idx = G * len(MODEL_CODES) + MODEL_CODES.index(model)
        try:
            result = fit(
                data,
                G,
                cov_model=model,
                init_strategy=fit_config.init_strategy,
                n_starts=fit_config.n_starts,
                max_iter=fit_config.max_iter,
                tol=fit_config.tol,
                rng=rng.child(idx),
            )
            cells.append(
                SweepCell(
                    G=G,
                    model=model,
                    status="OK",
                    criteria=information_criteria(result, criteria),
                    fit=result,
                )
            )
        except DegeneracyError as exc:
            cells.append(SweepCell(G=G, model=model, status=NOT_ESTIMATED, reason=str(exc)))

    if all(c.status == NOT_ESTIMATED for c in cells):
        raise DegeneracyError("every sweep cell failed to estimate")

    best: dict[str, SweepCell] = {}
    for name in criteria:
        candidates = [
            c for c in cells if c.status == "OK" and c.criteria.values.get(name) is not None
        ]
        if candidates:
            best[name] = max(candidates, key=lambda c: c.criteria.values[name])
    return SweepResult(cells=cells, criteria_names=tuple(criteria), best=best)
