"""
Structural Complexity Toolkit - Dataset Subsampler

Target-based subsampling to a fixed interaction budget: user filtering and
sampling, iterative item pruning, saturation repair and truncation.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from src.data.matrix import SparseMatrix
from src.utils import logging as log
from src.utils.config import resolve_threads
from src.utils.errors import EmptyResultError


class SubsampleParams(BaseModel):
    """
    Budget and thresholds for subsample_dataset

    user_headroom scales the number of sampled users above n_target / mean so
    the budget is still reachable after pruning; truncation cuts back to n_target.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_target: int = Field(default=100_000, ge=1)
    min_user_interactions: int = Field(default=5, ge=1)
    min_item_interactions: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)
    n_samples: int = Field(default=3, ge=1)
    user_headroom: float = Field(default=1.05, ge=1.0)


@dataclass(frozen=True, eq=False)
class SubsampleResult:
    matrix: SparseMatrix
    provenance: Dict[str, Any]


def _counts(matrix: SparseMatrix, mask: np.ndarray):
    users = np.bincount(matrix.rows[mask], minlength=matrix.n_users)
    items = np.bincount(matrix.cols[mask], minlength=matrix.n_items)
    return users, items


def prune_items(matrix: SparseMatrix, mask: np.ndarray, min_item: int) -> Dict[str, int]:
    """
    Drop items with fewer than min_item entries until none remain (mask is updated in place)
    """
    rounds = 0
    pruned = 0
    while True:
        _, items = _counts(matrix, mask)
        weak = (items > 0) & (items < min_item)
        if not weak.any():
            break
        mask &= ~weak[matrix.cols]
        pruned += int(weak.sum())
        rounds += 1
    return {"items_pruned": pruned, "pruning_rounds": rounds}


def _repair_saturation(matrix: SparseMatrix, mask: np.ndarray, injected: np.ndarray, rng: np.random.Generator):
    """
    Enforce |I_u| < |I_sub| for every sampled user

    A saturated user is repaired by injecting one original interaction of another
    sampled user with an item outside I_sub, which widens I_sub; when no such
    interaction exists the user is removed.

    The saturated user's own unseen items are never used: an interaction of
    that user adds one item to I_u and at most one to I_sub, so |I_u| < |I_sub|
    cannot be reached that way. The injected item must also be new to I_sub,
    otherwise |I_sub| does not grow.
    """
    saturated_seen = set()
    n_injected = 0
    removed = 0
    while True:
        users, items = _counts(matrix, mask)
        n_sub_items = int((items > 0).sum())
        saturated = np.flatnonzero((users > 0) & (users >= n_sub_items))
        if len(saturated) == 0:
            break
        user = int(saturated[0])
        saturated_seen.add(user)

        active = users > 0
        outside = items == 0
        pool = np.flatnonzero(
            ~mask & active[matrix.rows] & (matrix.rows != user) & outside[matrix.cols]
        )
        if len(pool):
            pick = int(rng.choice(pool))
            mask[pick] = True
            injected[pick] = True
            n_injected += 1
        else:
            mask &= matrix.rows != user
            removed += 1
    return {"saturated_users": len(saturated_seen), "injected": n_injected, "users_removed_saturated": removed}


def subsample_dataset(matrix: SparseMatrix, params: SubsampleParams) -> SubsampleResult:
    """
    Reduce a matrix to at most params.n_target interactions

    Steps, in order:
        1. drop users below min_user_interactions, then sample
           ceil(headroom * n_target / mean) of the rest uniformly (all of them when
           the filtered data already fits the budget)
        2. remove items below min_item_interactions until fixpoint
        3. repair saturated users
        4. remove random interactions down to n_target, injected ones last

    Args:
        matrix: Source matrix
        params: Budget, thresholds and seed

    Returns:
        SubsampleResult with the sample (same index maps as the source) and a
        provenance report

    Raises:
        EmptyResultError: Nothing survives filtering or pruning
    """
    rng = np.random.default_rng(params.seed)
    counts = matrix.user_counts
    present = counts > 0

    provenance: Dict[str, Any] = {
        "seed": params.seed,
        "n_target": params.n_target,
        "n_input": matrix.nnz,
        "mean_interactions_original": matrix.nnz / max(1, int(present.sum())),
    }

    # 1. user filtering and sampling
    eligible = np.flatnonzero(counts >= params.min_user_interactions)
    provenance["users_filtered"] = int(present.sum()) - len(eligible)
    if len(eligible) == 0:
        raise EmptyResultError(f"no user has at least {params.min_user_interactions} interactions")
    filtered_nnz = int(counts[eligible].sum())
    mean_filtered = filtered_nnz / len(eligible)
    provenance["mean_interactions_filtered"] = mean_filtered

    if filtered_nnz > params.n_target:
        n_users = min(len(eligible), math.ceil(params.user_headroom * params.n_target / mean_filtered))
        sampled = np.sort(rng.choice(eligible, size=n_users, replace=False))
    else:
        sampled = eligible
    provenance["users_sampled"] = len(sampled)
    selected_users = np.zeros(matrix.n_users, dtype=bool)
    selected_users[sampled] = True
    mask = selected_users[matrix.rows]
    log.debug_event("subsample_step", {"step": "user_sampling", "users": len(sampled), "nnz": int(mask.sum())})

    # 2. item support pruning
    provenance.update(prune_items(matrix, mask, params.min_item_interactions))
    users_after, _ = _counts(matrix, mask)
    provenance["users_emptied"] = int((selected_users & (users_after == 0)).sum())
    if not mask.any():
        raise EmptyResultError("item pruning removed every interaction")
    log.debug_event("subsample_step", {"step": "item_pruning", "nnz": int(mask.sum())})

    # 3. saturation
    injected = np.zeros(matrix.nnz, dtype=bool)
    provenance.update(_repair_saturation(matrix, mask, injected, rng))
    if not mask.any():
        raise EmptyResultError("saturation repair removed every user")
    log.debug_event("subsample_step", {"step": "saturation", "nnz": int(mask.sum())})

    # 4. truncation
    excess = int(mask.sum()) - params.n_target
    truncated = 0
    if excess > 0:
        regular = np.flatnonzero(mask & ~injected)
        drop = rng.choice(regular, size=min(excess, len(regular)), replace=False)
        mask[drop] = False
        truncated = len(drop)
        if truncated < excess:
            extra = rng.choice(np.flatnonzero(mask), size=excess - truncated, replace=False)
            mask[extra] = False
            truncated = excess
    provenance["truncated"] = truncated

    users_final, items_final = _counts(matrix, mask)
    n_sub_items = int((items_final > 0).sum())
    provenance["n_output"] = int(mask.sum())
    provenance["post_truncation_item_violations"] = int(
        ((items_final > 0) & (items_final < params.min_item_interactions)).sum()
    )
    provenance["post_truncation_saturated_users"] = int(((users_final > 0) & (users_final >= n_sub_items)).sum())

    log.info_event("subsample_step", {"step": "done", **provenance})
    return SubsampleResult(matrix.select(mask), provenance)


def subsample_replicas(
    matrix: SparseMatrix,
    params: SubsampleParams,
    threads: Optional[int] = None
) -> List[SubsampleResult]:
    """
    params.n_samples independent samples with seeds seed, seed + 1, ...
    """
    seeds = [params.seed + i for i in range(params.n_samples)]
    return Parallel(n_jobs=resolve_threads(threads))(
        delayed(subsample_dataset)(matrix, params.model_copy(update={"seed": seed}))
        for seed in seeds
    )
