"""
Structural Complexity Toolkit - Perturbation Engine

Builds the perturbed matrix M^P from M by seeded value shuffling and structural
relocation, optionally favouring recent entries.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from src.data.matrix import EntryKind, EntrySet, SparseMatrix
from src.utils import logging as log
from src.utils import serialization
from src.utils.errors import CannotRelocateError, InvalidArgumentError, UnsupportedOperationError

# Quotas are floors of products like 0.7 * 0.1 * 100; the slack keeps 6.999... at 7
QUOTA_SLACK = 1e-9

# Up to this many cells the complement of the observed set is enumerated outright
COMPLEMENT_ENUMERATION_LIMIT = 1 << 22

REJECTION_DRAW_FACTOR = 100


class PerturbationParams(BaseModel):
    """
    Perturbation settings

    p is the fraction of observed entries perturbed; alpha the share of those
    that are value-shuffled (the rest are relocated to empty cells).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    p: float = Field(default=0.1, gt=0.0, lt=1.0)
    alpha: float = Field(default=0.7, ge=0.0, le=1.0)
    time_weighted: bool = False
    epsilon: float = Field(default=1e-9, gt=0.0)
    seed: int = Field(default=0, ge=0)


def quota(fraction: float, size: int) -> int:
    return int(math.floor(fraction * size + QUOTA_SLACK))


@dataclass(frozen=True)
class TimeWeights:
    probabilities: np.ndarray
    uniform_fallback: bool


def time_weights(timestamps: np.ndarray, epsilon: float = 1e-9) -> TimeWeights:
    """
    Recency sampling distribution

    weight_i is proportional to (t_i - t_min) / (t_max - t_min + epsilon). When
    every raw weight is zero (all timestamps equal) the uniform distribution is
    returned and the fallback is flagged.

    Args:
        timestamps: Epoch seconds, non-empty
        epsilon: Denominator guard, > 0

    Returns:
        TimeWeights with probabilities summing to 1
    """
    t = np.asarray(timestamps, dtype=np.float64)
    if t.size == 0:
        raise InvalidArgumentError("time_weights needs at least one timestamp")
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be > 0, got {epsilon}")

    raw = (t - t.min()) / (t.max() - t.min() + epsilon)
    total = math.fsum(raw)
    if total == 0.0:
        return TimeWeights(np.full(t.size, 1.0 / t.size), True)
    return TimeWeights(raw / total, False)


def weighted_order(rng: np.random.Generator, weights: np.ndarray, count: int) -> np.ndarray:
    """
    Draw `count` indices without replacement, proportional to weights

    Exponential-race keys: each index gets E_i / w_i with E_i ~ Exp(1), and the
    smallest keys win. Zero-weight indices never win the race; if the positive
    pool runs out, the remaining slots are filled uniformly from the zero pool.
    """
    weights = np.asarray(weights, dtype=np.float64)
    draws = rng.exponential(size=weights.size)
    positive = weights > 0
    keys = np.full(weights.size, np.inf)
    keys[positive] = draws[positive] / weights[positive]

    ranked = np.argsort(keys, kind="stable")
    n_positive = int(positive.sum())
    if count <= n_positive:
        return ranked[:count]

    zero_pool = np.flatnonzero(~positive)
    fill = rng.choice(zero_pool, size=count - n_positive, replace=False)
    return np.concatenate([ranked[:n_positive], fill])


def _sample_complement(matrix: SparseMatrix, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of `count` distinct empty cells, as linear keys"""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    total = matrix.n_users * matrix.n_items
    available = total - matrix.nnz
    if available < count:
        raise CannotRelocateError(
            f"{count} relocations requested but only {available} empty cells exist"
        )

    if total <= COMPLEMENT_ENUMERATION_LIMIT:
        complement = np.setdiff1d(np.arange(total, dtype=np.int64), matrix.keys, assume_unique=True)
        return rng.choice(complement, size=count, replace=False)

    chosen: Dict[int, None] = {}
    budget = REJECTION_DRAW_FACTOR * count
    while len(chosen) < count and budget > 0:
        batch = min(budget, 2 * (count - len(chosen)))
        budget -= batch
        keys = rng.integers(0, total, size=batch, dtype=np.int64)
        index = np.minimum(np.searchsorted(matrix.keys, keys), matrix.nnz - 1)
        free = matrix.keys[index] != keys
        for key in keys[free].tolist():
            if len(chosen) == count:
                break
            chosen.setdefault(key)
    if len(chosen) < count:
        raise CannotRelocateError(
            f"rejection sampling found {len(chosen)} of {count} empty cells within "
            f"{REJECTION_DRAW_FACTOR * count} draws"
        )
    return np.fromiter(chosen, dtype=np.int64, count=count)


@dataclass(frozen=True, eq=False)
class PerturbationPlan:
    """
    Disjoint perturbation sets for one matrix

    Args:
        omega_val: Observed entries whose values are shuffled among themselves
        omega_remove: Observed entries that are moved away
        omega_add: Empty cells receiving the moved entries; omega_add[i] gets omega_remove[i]
        value_permutation: M^P at omega_val[i] carries M at omega_val[value_permutation[i]]
        params: Settings the plan was drawn with
        shape: Dimensions of the matrix the plan belongs to
    """

    omega_val: EntrySet
    omega_remove: EntrySet
    omega_add: EntrySet
    value_permutation: np.ndarray
    params: PerturbationParams
    shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        perm = np.asarray(self.value_permutation, dtype=np.int64)
        if len(perm) != len(self.omega_val) or not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise InvalidArgumentError("value_permutation must be a permutation of omega_val")
        if len(self.omega_remove) != len(self.omega_add):
            raise InvalidArgumentError("omega_remove and omega_add must have equal size")
        perm.setflags(write=False)
        object.__setattr__(self, "value_permutation", perm)

    @classmethod
    def empty(cls, params: Optional[PerturbationParams] = None) -> "PerturbationPlan":
        """Identity plan: M^P = M"""
        return cls(
            omega_val=EntrySet.empty(EntryKind.VAL),
            omega_remove=EntrySet.empty(EntryKind.REMOVE),
            omega_add=EntrySet.empty(EntryKind.ADD),
            value_permutation=np.empty(0, dtype=np.int64),
            params=params or PerturbationParams(),
        )

    @property
    def omega_pert(self) -> EntrySet:
        return EntrySet.union([self.omega_val, self.omega_remove, self.omega_add], EntryKind.PERT)

    @property
    def n_pert(self) -> int:
        return len(self.omega_val) + len(self.omega_remove) + len(self.omega_add)

    @property
    def relocation_pairs(self) -> np.ndarray:
        """(k, 4) array of [remove_row, remove_col, add_row, add_col]"""
        return np.stack(
            [self.omega_remove.rows, self.omega_remove.cols, self.omega_add.rows, self.omega_add.cols], axis=1
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.model_dump(),
            "shape": list(self.shape) if self.shape else None,
            "omega_val": self.omega_val.to_dict(),
            "omega_remove": self.omega_remove.to_dict(),
            "omega_add": self.omega_add.to_dict(),
            "value_permutation": self.value_permutation.tolist(),
            "relocation": self.relocation_pairs.tolist(),
        }

    def to_json(self) -> bytes:
        return serialization.dumps(self.to_dict())

    @classmethod
    def from_json(cls, data: bytes) -> "PerturbationPlan":
        payload = serialization.loads(data)
        return cls(
            omega_val=EntrySet.from_dict(payload["omega_val"]),
            omega_remove=EntrySet.from_dict(payload["omega_remove"]),
            omega_add=EntrySet.from_dict(payload["omega_add"]),
            value_permutation=np.asarray(payload["value_permutation"], dtype=np.int64),
            params=PerturbationParams(**payload["params"]),
            shape=tuple(payload["shape"]) if payload.get("shape") else None,
        )

    def __repr__(self) -> str:
        return (
            f"PerturbationPlan(val={len(self.omega_val)}, remove={len(self.omega_remove)}, "
            f"add={len(self.omega_add)})"
        )


def _entry_weights(matrix: SparseMatrix, index: np.ndarray, params: PerturbationParams) -> Optional[np.ndarray]:
    if not params.time_weighted:
        return None
    if not matrix.has_timestamps:
        raise UnsupportedOperationError("time-weighted sampling requires timestamps on every entry")
    weights = time_weights(matrix.timestamps[index], params.epsilon)
    if weights.uniform_fallback:
        log.warning_event("time_weights_uniform", {"entries": int(len(index))})
    return weights.probabilities


def _build_plan(
    matrix: SparseMatrix,
    index: np.ndarray,
    n_val: int,
    n_remove: int,
    params: PerturbationParams,
    rng: np.random.Generator
) -> PerturbationPlan:
    # Draw order: entry selection, relocation targets, value permutation
    weights = _entry_weights(matrix, index, params)
    n_selected = n_val + n_remove
    if weights is None:
        picked = rng.choice(len(index), size=n_selected, replace=False)
    else:
        picked = weighted_order(rng, weights, n_selected)
    chosen = index[picked]
    val_index, remove_index = chosen[:n_val], chosen[n_val:]

    add_keys = _sample_complement(matrix, n_remove, rng)
    permutation = rng.permutation(n_val)

    plan = PerturbationPlan(
        omega_val=EntrySet(matrix.rows[val_index], matrix.cols[val_index], EntryKind.VAL),
        omega_remove=EntrySet(matrix.rows[remove_index], matrix.cols[remove_index], EntryKind.REMOVE),
        omega_add=EntrySet(add_keys // matrix.n_items, add_keys % matrix.n_items, EntryKind.ADD),
        value_permutation=permutation,
        params=params,
        shape=matrix.shape,
    )
    log.debug_event("perturbation_planned", {
        "val": n_val, "remove": n_remove, "add": n_remove,
        "time_weighted": params.time_weighted, "seed": params.seed,
    })
    return plan


def select_perturbation_sets(matrix: SparseMatrix, params: PerturbationParams) -> PerturbationPlan:
    """
    Draw a perturbation plan over the whole observed set

    |omega_val| = floor(alpha * p * |Omega|) and
    |omega_remove| = |omega_add| = floor((1 - alpha) * p * |Omega|). Entries are
    sampled without replacement, recency-weighted when params.time_weighted is
    set; relocation targets are uniform over the empty cells.

    Raises:
        InvalidArgumentError: floor(p * |Omega|) < 1
        CannotRelocateError: Too few empty cells
        UnsupportedOperationError: Time weighting without timestamps
    """
    nnz = matrix.nnz
    if quota(params.p, nnz) < 1:
        raise InvalidArgumentError(f"p={params.p} perturbs no entries of a matrix with {nnz} entries")
    n_val = quota(params.alpha * params.p, nnz)
    n_remove = quota((1.0 - params.alpha) * params.p, nnz)
    if n_val + n_remove > nnz:
        raise InvalidArgumentError(f"perturbation quota {n_val + n_remove} exceeds {nnz} entries")

    rng = np.random.default_rng(params.seed)
    return _build_plan(matrix, np.arange(nnz), n_val, n_remove, params, rng)


def plan_for_entries(
    matrix: SparseMatrix,
    candidates: EntrySet,
    params: PerturbationParams,
    rng: np.random.Generator
) -> PerturbationPlan:
    """
    Split a fixed candidate set into value and relocation entries

    floor(alpha * |candidates|) entries are value-shuffled, every remaining
    candidate is relocated. params.p is not used.

    Args:
        matrix: Source matrix
        candidates: Observed positions to perturb
        params: alpha, time weighting and epsilon
        rng: Generator owned by the caller

    Returns:
        PerturbationPlan covering every candidate
    """
    found, index = matrix.locate(candidates.rows, candidates.cols)
    if not found.all():
        raise InvalidArgumentError("candidate positions must be observed entries")
    size = len(candidates)
    n_val = quota(params.alpha, size)
    if n_val == 0 and quota(1.0 - params.alpha, size) == 0:
        raise InvalidArgumentError(f"{size} candidates are too few to honor alpha={params.alpha}")
    return _build_plan(matrix, index, n_val, size - n_val, params, rng)


def _check_plan(matrix: SparseMatrix, plan: PerturbationPlan) -> Tuple[np.ndarray, np.ndarray]:
    if plan.shape is not None and tuple(plan.shape) != matrix.shape:
        raise InvalidArgumentError(f"plan shape {plan.shape} does not match matrix shape {matrix.shape}")
    found_val, val_index = matrix.locate(plan.omega_val.rows, plan.omega_val.cols)
    found_remove, remove_index = matrix.locate(plan.omega_remove.rows, plan.omega_remove.cols)
    found_add, _ = matrix.locate(plan.omega_add.rows, plan.omega_add.cols)
    if not found_val.all() or not found_remove.all() or found_add.any():
        raise InvalidArgumentError("plan was not built from this matrix")
    if np.intersect1d(val_index, remove_index).size:
        raise InvalidArgumentError("omega_val and omega_remove overlap")
    return val_index, remove_index


def apply_perturbation(matrix: SparseMatrix, plan: PerturbationPlan) -> SparseMatrix:
    """
    Build M^P

    Shuffled cells keep their timestamps; relocated entries carry their rating
    and timestamp to the new cell. nnz(M^P) = nnz(M).
    """
    val_index, remove_index = _check_plan(matrix, plan)

    values = matrix.values.copy()
    values[val_index] = matrix.values[val_index[plan.value_permutation]]

    keep = np.ones(matrix.nnz, dtype=bool)
    keep[remove_index] = False

    return matrix.with_entries(
        np.concatenate([matrix.rows[keep], plan.omega_add.rows]),
        np.concatenate([matrix.cols[keep], plan.omega_add.cols]),
        np.concatenate([values[keep], matrix.values[remove_index]]),
        np.concatenate([matrix.timestamps[keep], matrix.timestamps[remove_index]]),
    )


def delta_matrix(matrix: SparseMatrix, plan: PerturbationPlan) -> sp.csr_matrix:
    """
    Sparse difference M - M^P, reconstructed from the plan alone
    """
    val_index, remove_index = _check_plan(matrix, plan)
    moved = matrix.values[remove_index]
    rows = np.concatenate([plan.omega_val.rows, plan.omega_remove.rows, plan.omega_add.rows])
    cols = np.concatenate([plan.omega_val.cols, plan.omega_remove.cols, plan.omega_add.cols])
    data = np.concatenate([
        matrix.values[val_index] - matrix.values[val_index[plan.value_permutation]],
        moved,
        -moved,
    ])
    delta = sp.csr_matrix((data, (rows, cols)), shape=matrix.shape)
    delta.eliminate_zeros()
    return delta
