"""External cluster-validity indices against reference labels.

Pair counts come from contingency-table binomial identities (O(K^2), not
O(N^2)).  HA is the usual hypergeometric-expectation adjusted Rand; MA is
the Morey-Agresti variant whose expectation fixes the marginals without the
hypergeometric correction.  Indices with an undefined denominator are
reported as None, never coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError


@dataclass
class PairCounts:
    """Unordered-pair agreement counts between two partitions of N items."""

    same_same: int  # a: same cluster in both
    same_diff: int  # b: same in the first, different in the second
    diff_same: int  # c: different in the first, same in the second
    diff_diff: int  # d: different in both

    @property
    def total(self) -> int:
        return self.same_same + self.same_diff + self.diff_same + self.diff_diff


@dataclass
class PartitionIndices:
    rand: Optional[float]
    ha: Optional[float]
    ma: Optional[float]
    fm: Optional[float]
    jaccard: Optional[float]

    def as_dict(self) -> dict[str, Optional[float]]:
        return {"rand": self.rand, "ha": self.ha, "ma": self.ma, "fm": self.fm, "jaccard": self.jaccard}


def _codes(labels) -> np.ndarray:
    arr = np.asarray(labels)
    _, codes = np.unique(arr, return_inverse=True)
    return codes


def contingency_table(pred, truth) -> np.ndarray:
    """K_pred x K_true counts; classes ordered by sorted distinct value."""
    p = _codes(pred)
    t = _codes(truth)
    if p.shape != t.shape:
        raise DataError(f"label lengths differ: {p.shape[0]} vs {t.shape[0]}")
    ct = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(ct, (p, t), 1)
    return ct


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def pair_counts(pred, truth) -> PairCounts:
    """Agreement counts over all N(N-1)/2 unordered pairs."""
    ct = contingency_table(pred, truth)
    n = int(ct.sum())
    if n < 2:
        raise DataError("pair counting needs at least 2 items")
    a = int(_comb2(ct).sum())
    rows = int(_comb2(ct.sum(axis=1)).sum())
    cols = int(_comb2(ct.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    return PairCounts(
        same_same=a,
        same_diff=rows - a,
        diff_same=cols - a,
        diff_diff=total - rows - cols + a,
    )


def indices(pc: PairCounts, ct: np.ndarray) -> PartitionIndices:
    """Rand, adjusted Rand (HA), Morey-Agresti adjusted Rand (MA),
    Fowlkes-Mallows and Jaccard."""
    a, b, c = pc.same_same, pc.same_diff, pc.diff_same
    total = pc.total
    rand = (a + pc.diff_diff) / total if total > 0 else None

    same_pred = a + b
    same_true = a + c
    expected = same_pred * same_true / total if total > 0 else 0.0
    ha_denom = 0.5 * (same_pred + same_true) - expected
    ha = (a - expected) / ha_denom if ha_denom != 0 else None

    n = int(ct.sum())
    sum_sq = float((ct.astype(np.float64) ** 2).sum())
    sum_rows_sq = float((ct.sum(axis=1).astype(np.float64) ** 2).sum())
    sum_cols_sq = float((ct.sum(axis=0).astype(np.float64) ** 2).sum())
    cross = sum_rows_sq * sum_cols_sq / n**2
    ma_denom = sum_rows_sq + sum_cols_sq - 2.0 * cross
    ma = 2.0 * (sum_sq - cross) / ma_denom if ma_denom != 0 else None

    fm = a / np.sqrt(same_pred * same_true) if same_pred > 0 and same_true > 0 else None
    jaccard = a / (a + b + c) if a + b + c > 0 else None
    return PartitionIndices(rand=rand, ha=ha, ma=ma, fm=fm, jaccard=jaccard)


def majority_accuracy(pred, truth) -> float:
    """Map each predicted cluster to its modal true class (ties toward the
    smaller class index) and score the fraction mapped correctly."""
    ct = contingency_table(pred, truth)
    return float(ct.max(axis=1).sum() / ct.sum())


def score_partitions(pred, truth) -> dict[str, Optional[float]]:
    """All five pair indices plus majority-mapped accuracy."""
    ct = contingency_table(pred, truth)
    pc = pair_counts(pred, truth)
    out = indices(pc, ct).as_dict()
    out["majority_accuracy"] = majority_accuracy(pred, truth)
    return out
