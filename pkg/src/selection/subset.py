"""
Structural Complexity Toolkit - Subset Selection and Analysis

Per-user stratified subset selection, relative performance (RPA) and Pearson
correlation between complexity and performance.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.data.matrix import EntryKind, EntrySet, SparseMatrix
from src.selection.strategy import SelectionSpec, get_strategy
from src.spectral.scorer import ScoreTable
from src.utils import logging as log
from src.utils.errors import (
    DegenerateInputError,
    InfeasibleRateError,
    InvalidArgumentError,
    UndefinedBaselineError,
)

# Guards ceil/floor of rate * count against representation error (0.1 * 30 = 3.0000000000000004)
RATE_SLACK = 1e-9


def user_quotas(counts: np.ndarray, rate: float) -> Tuple[np.ndarray, int]:
    """
    Per-user entry quotas and the global budget floor(rate * N)

    Every user with c_u > 0 entries gets one entry. The remaining budget goes
    to extra entries ranked once, independently of the rate: the k-th entry of
    user u (k >= 2) has priority c_u / (k - 1), ties to the lower row. The
    top budget - n_users extras are awarded (Adams apportionment), so a
    quota never shrinks as the rate grows and never exceeds
    ceil(c_u * budget / N) <= max(1, ceil(rate * c_u)).

    Returns:
        (quota per user, global budget)

    Raises:
        InfeasibleRateError: Budget smaller than the number of users
    """
    counts = np.asarray(counts, dtype=np.int64)
    active = counts > 0
    n_users = int(active.sum())
    budget = int(math.floor(rate * counts.sum() + RATE_SLACK))
    if budget < n_users:
        raise InfeasibleRateError(
            f"rate {rate} keeps {budget} entries, fewer than the {n_users} users that must be represented"
        )

    quotas = active.astype(np.int64)
    extras = budget - n_users
    if extras == 0:
        return quotas, budget

    per_user = np.maximum(counts - 1, 0)
    seat_user = np.repeat(np.arange(len(counts), dtype=np.int64), per_user)
    seat_starts = np.cumsum(per_user) - per_user
    # k - 1 for the k-th entry of each user: 1, 2, ..., c_u - 1
    seat_rank = np.arange(len(seat_user), dtype=np.int64) - seat_starts[seat_user] + 1
    priority = counts[seat_user] / seat_rank
    order = np.lexsort((seat_rank, seat_user, -priority))
    quotas += np.bincount(seat_user[order[:extras]], minlength=len(counts))
    return quotas, budget


def select_subset(matrix: SparseMatrix, scores: ScoreTable, spec: SelectionSpec) -> EntrySet:
    """
    Build a training subset

    Within each user, entries are ranked by the strategy's key, then by larger
    timestamp, then by larger column. In stratified mode each user keeps its
    quota from user_quotas; otherwise the best floor(rate * N) entries are kept
    globally.

    Args:
        matrix: Train matrix
        scores: Score table covering every entry of matrix
        spec: Strategy, rate and seed

    Returns:
        EntrySet of kept positions in row-major order
    """
    strategy = get_strategy(spec.strategy)
    strategy.check(matrix)

    entry_scores = scores.scores_at(matrix.entries()) if scores.matrix is not matrix else scores.scores
    keys = strategy.priority(matrix, entry_scores, spec)
    newest_first = ~matrix.timestamps
    last_col_first = ~matrix.cols.astype(np.int64)

    if spec.stratified:
        order = np.lexsort((last_col_first, newest_first, keys, matrix.rows))
        quotas, budget = user_quotas(matrix.user_counts, spec.rate)
        # Position of each sorted entry within its user's run
        starts = matrix.csr.indptr[:-1]
        sorted_rows = matrix.rows[order]
        rank = np.arange(matrix.nnz) - starts[sorted_rows]
        kept = order[rank < quotas[sorted_rows]]
    else:
        order = np.lexsort((last_col_first, newest_first, keys))
        budget = max(1, int(math.floor(spec.rate * matrix.nnz + RATE_SLACK)))
        kept = order[:budget]

    kept = np.sort(kept)
    subset = EntrySet(matrix.rows[kept], matrix.cols[kept], EntryKind.SUBSET)
    log.info_event("subset_selected", {
        "strategy": strategy.name,
        "rate": spec.rate,
        "stratified": spec.stratified,
        "size": len(subset),
        "budget": budget,
        "users": int(np.unique(subset.rows).size),
    })
    return subset


def rate_grid(step: float = 0.1) -> List[float]:
    """Rates step, 2 * step, ..., 1.0"""
    if not 0 < step <= 1:
        raise InvalidArgumentError(f"step must lie in (0, 1], got {step}")
    count = int(math.floor(1.0 / step + RATE_SLACK))
    grid = [round(step * i, 10) for i in range(1, count + 1)]
    if grid[-1] != 1.0:
        grid.append(1.0)
    return grid


def rpa(metric_at_rate: float, metric_at_full: float) -> float:
    """
    Relative performance: percentage change against the full-data baseline

    Raises:
        UndefinedBaselineError: Baseline metric not strictly positive
    """
    if not metric_at_full > 0:
        raise UndefinedBaselineError(f"baseline metric must be > 0, got {metric_at_full}")
    return 100.0 * (metric_at_rate / metric_at_full - 1.0)


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    n: int
    p_value: float

    def to_dict(self) -> Dict[str, float]:
        return {"pearson_r": self.pearson_r, "n": self.n, "p_value": self.p_value}


def correlate(pairs: Sequence[Tuple[float, float]]) -> CorrelationResult:
    """
    Pearson product-moment correlation of (complexity, performance) pairs

    Raises:
        DegenerateInputError: Fewer than 3 pairs, or a coordinate with zero variance
    """
    data = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(data) < 3:
        raise DegenerateInputError(f"correlation needs at least 3 pairs, got {len(data)}")
    if not np.isfinite(data).all():
        raise DegenerateInputError("correlation input contains non-finite values")
    x, y = data[:, 0], data[:, 1]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("correlation input has zero variance")

    result = stats.pearsonr(x, y)
    return CorrelationResult(float(result[0]), len(data), float(result[1]))


def correlate_columns(frame: pd.DataFrame, x: str, ys: Optional[Sequence[str]] = None) -> Dict[str, CorrelationResult]:
    """
    Correlate column x against each of ys (every other numeric column when omitted)
    """
    if x not in frame.columns:
        raise InvalidArgumentError(f"column {x!r} not found")
    if ys is None:
        ys = [col for col in frame.select_dtypes("number").columns if col != x]
    results = {}
    for y in ys:
        if y not in frame.columns:
            raise InvalidArgumentError(f"column {y!r} not found")
        results[y] = correlate(list(zip(frame[x].to_numpy(dtype=np.float64), frame[y].to_numpy(dtype=np.float64))))
    return results
