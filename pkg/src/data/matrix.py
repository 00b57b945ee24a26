"""
Structural Complexity Toolkit - Sparse Interaction Matrix

Immutable CSR rating matrix with token index maps, entry sets, the
leave-last-out holdout and seeded fold partitioning.
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from src.data.interactions import TIMESTAMP_ABSENT, InteractionSet
from src.utils import logging as log
from src.utils.errors import (
    EmptyInputError,
    InvalidArgumentError,
    NumericInputError,
    UnsupportedOperationError,
)


class DedupPolicy(str, Enum):
    """How repeated (user, item) records collapse into one matrix entry"""

    KEEP_LAST_BY_TIMESTAMP = "keep_last_by_timestamp"
    MEAN = "mean"


class EntryKind(str, Enum):
    VAL = "val"
    REMOVE = "remove"
    ADD = "add"
    PERT = "pert"
    FOLD = "fold"
    TEST = "test"
    SUBSET = "subset"


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EntrySet:
    """
    Ordered set of unique (row, col) positions

    Args:
        rows: Row indices
        cols: Column indices, aligned with rows
        kind: Role of the set (perturbation subset, fold, test split, ...)
    """

    rows: np.ndarray
    cols: np.ndarray
    kind: EntryKind

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise InvalidArgumentError("rows and cols must be 1-D arrays of equal length")
        if len(rows) > 1:
            pairs = np.stack([rows, cols], axis=1)
            if len(np.unique(pairs, axis=0)) != len(rows):
                raise InvalidArgumentError(f"duplicate positions in {self.kind.value} entry set")
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "cols", _freeze(cols))

    @classmethod
    def empty(cls, kind: EntryKind) -> "EntrySet":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), kind)

    @classmethod
    def union(cls, sets: Iterable["EntrySet"], kind: EntryKind) -> "EntrySet":
        """Concatenate disjoint sets, preserving order"""
        sets = list(sets)
        if not sets:
            return cls.empty(kind)
        return cls(
            np.concatenate([s.rows for s in sets]),
            np.concatenate([s.cols for s in sets]),
            kind,
        )

    def __len__(self) -> int:
        return len(self.rows)

    def keys(self, n_items: int) -> np.ndarray:
        """Linear cell keys row * n_items + col"""
        return self.rows * np.int64(n_items) + self.cols

    def positions(self) -> List[Tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def to_dict(self) -> Dict[str, object]:
        return {"kind": self.kind.value, "rows": self.rows.tolist(), "cols": self.cols.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> "EntrySet":
        return cls(np.asarray(payload["rows"]), np.asarray(payload["cols"]), EntryKind(payload["kind"]))

    def __repr__(self) -> str:
        return f"EntrySet(kind={self.kind.value}, size={len(self)})"


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """
    Immutable sparse rating matrix M (n_users x n_items)

    Entries are stored in canonical CSR order (row-major, columns ascending);
    `timestamps` is aligned with `csr.data`. Row r belongs to user_tokens[r],
    column c to item_tokens[c].
    """

    csr: sp.csr_matrix
    timestamps: np.ndarray
    user_tokens: np.ndarray
    item_tokens: np.ndarray

    @classmethod
    def from_entries(
        cls,
        rows: np.ndarray,
        cols: np.ndarray,
        values: np.ndarray,
        timestamps: Optional[np.ndarray],
        user_tokens: np.ndarray,
        item_tokens: np.ndarray,
    ) -> "SparseMatrix":
        """
        Build a matrix from coordinate arrays

        Args:
            rows: Row index per entry
            cols: Column index per entry
            values: Entry values (finite)
            timestamps: Epoch seconds per entry, or None for all absent
            user_tokens: Token for each row
            item_tokens: Token for each column

        Returns:
            SparseMatrix with entries sorted into CSR order
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if timestamps is None:
            timestamps = np.full(len(rows), TIMESTAMP_ABSENT, dtype=np.int64)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        n_users, n_items = len(user_tokens), len(item_tokens)

        if not (len(rows) == len(cols) == len(values) == len(timestamps)):
            raise InvalidArgumentError("coordinate arrays must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_users or cols.min() < 0 or cols.max() >= n_items):
            raise InvalidArgumentError("entry position out of bounds")
        if not np.isfinite(values).all():
            raise NumericInputError("matrix values must be finite")

        order = np.lexsort((cols, rows))
        rows, cols, values, timestamps = rows[order], cols[order], values[order], timestamps[order]
        if len(rows) > 1:
            same = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if same.any():
                raise InvalidArgumentError("duplicate (row, col) entries")

        indptr = np.zeros(n_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_users), out=indptr[1:])
        csr = sp.csr_matrix((values, cols, indptr), shape=(n_users, n_items))
        csr.has_sorted_indices = True
        for array in (csr.data, csr.indices, csr.indptr):
            array.setflags(write=False)

        return cls(
            csr=csr,
            timestamps=_freeze(timestamps),
            user_tokens=_freeze(np.asarray(user_tokens, dtype=object)),
            item_tokens=_freeze(np.asarray(item_tokens, dtype=object)),
        )

    # Shape and content

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    @property
    def cols(self) -> np.ndarray:
        return self.csr.indices

    @cached_property
    def rows(self) -> np.ndarray:
        return _freeze(np.repeat(np.arange(self.n_users, dtype=np.int64), np.diff(self.csr.indptr)))

    @cached_property
    def keys(self) -> np.ndarray:
        """Sorted linear keys row * n_items + col, one per entry"""
        return _freeze(self.rows * np.int64(self.n_items) + self.cols.astype(np.int64))

    @property
    def has_timestamps(self) -> bool:
        return self.nnz > 0 and bool((self.timestamps != TIMESTAMP_ABSENT).all())

    @cached_property
    def user_index(self) -> Dict[str, int]:
        return {token: row for row, token in enumerate(self.user_tokens)}

    @cached_property
    def item_index(self) -> Dict[str, int]:
        return {token: col for col, token in enumerate(self.item_tokens)}

    @property
    def user_counts(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    @property
    def item_counts(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n_items)

    # Lookup

    def locate(self, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Find entry indices for positions

        Returns:
            (found mask, index into CSR data; meaningless where not found)
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.n_users or cols.min() < 0 or cols.max() >= self.n_items):
            raise InvalidArgumentError("position out of bounds")
        keys = rows * np.int64(self.n_items) + cols
        index = np.searchsorted(self.keys, keys)
        clipped = np.minimum(index, max(self.nnz - 1, 0))
        found = (index < self.nnz) & (self.keys[clipped] == keys) if self.nnz else np.zeros(len(keys), dtype=bool)
        return found, clipped

    def values_at(self, positions: EntrySet) -> np.ndarray:
        """M_ij at each position, 0 for cells outside the observed set"""
        found, index = self.locate(positions.rows, positions.cols)
        return np.where(found, self.values[index] if self.nnz else 0.0, 0.0)

    def entries(self, kind: EntryKind = EntryKind.PERT) -> EntrySet:
        return EntrySet(self.rows, self.cols, kind)

    # Derived matrices

    def with_entries(
        self,
        rows: np.ndarray,
        cols: np.ndarray,
        values: np.ndarray,
        timestamps: Optional[np.ndarray],
    ) -> "SparseMatrix":
        """New matrix over the same index maps"""
        return SparseMatrix.from_entries(rows, cols, values, timestamps, self.user_tokens, self.item_tokens)

    def select(self, mask: np.ndarray) -> "SparseMatrix":
        """Keep the entries where mask is True (same dimensions and index maps)"""
        mask = np.asarray(mask, dtype=bool)
        return self.with_entries(self.rows[mask], self.cols[mask], self.values[mask], self.timestamps[mask])

    def to_interactions(self, mask: Optional[np.ndarray] = None) -> InteractionSet:
        """Entries as interaction records, in CSR order"""
        index = np.arange(self.nnz) if mask is None else np.flatnonzero(mask)
        return InteractionSet(
            pd.DataFrame(
                {
                    "user_id": self.user_tokens[self.rows[index]],
                    "item_id": self.item_tokens[self.cols[index]],
                    "rating": self.values[index],
                    "timestamp": self.timestamps[index],
                }
            )
        )

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def __repr__(self) -> str:
        return f"SparseMatrix(users={self.n_users}, items={self.n_items}, nnz={self.nnz})"


def build_matrix(
    records: InteractionSet,
    dedup: DedupPolicy = DedupPolicy.KEEP_LAST_BY_TIMESTAMP
) -> SparseMatrix:
    """
    Deduplicate and index an interaction log

    Rows and columns are assigned in order of first appearance. Colliding
    (user, item) records are resolved by the dedup policy: keep_last_by_timestamp
    keeps the record with the latest timestamp (later input wins ties, and any
    timestamped record beats an untimestamped one); mean averages the ratings and
    keeps the latest timestamp. Ratings of exactly zero are not part of the
    observed set and are dropped.

    Args:
        records: Parsed interaction log
        dedup: Collision policy

    Returns:
        SparseMatrix over the observed entries
    """
    if len(records) == 0:
        raise EmptyInputError("cannot build a matrix from an empty interaction set")
    dedup = DedupPolicy(dedup)

    frame = records.frame
    rows, user_tokens = pd.factorize(frame["user_id"], sort=False)
    cols, item_tokens = pd.factorize(frame["item_id"], sort=False)

    work = pd.DataFrame(
        {
            "row": rows.astype(np.int64),
            "col": cols.astype(np.int64),
            "rating": frame["rating"].to_numpy(dtype=np.float64),
            "timestamp": frame["timestamp"].to_numpy(dtype=np.int64),
            "order": np.arange(len(frame), dtype=np.int64),
        }
    )

    if dedup is DedupPolicy.KEEP_LAST_BY_TIMESTAMP:
        work = work.sort_values(["row", "col", "timestamp", "order"], kind="mergesort")
        work = work.drop_duplicates(["row", "col"], keep="last")
    else:
        work = work.groupby(["row", "col"], sort=True, as_index=False).agg(
            rating=("rating", "mean"), timestamp=("timestamp", "max")
        )

    duplicates = len(frame) - len(work)
    zeros = work["rating"].to_numpy() == 0.0
    if zeros.any():
        log.warning_event("zero_ratings_dropped", {"count": int(zeros.sum())})
        work = work[~zeros]

    matrix = SparseMatrix.from_entries(
        work["row"].to_numpy(),
        work["col"].to_numpy(),
        work["rating"].to_numpy(),
        work["timestamp"].to_numpy(),
        np.asarray(user_tokens, dtype=object),
        np.asarray(item_tokens, dtype=object),
    )

    log.info_event("matrix_built", {
        "users": matrix.n_users,
        "items": matrix.n_items,
        "nnz": matrix.nnz,
        "duplicates_collapsed": int(duplicates),
        "dedup": dedup.value,
    })
    return matrix


@dataclass(frozen=True, eq=False)
class HoldoutSplit:
    """
    Leave-last-out split: each user's most recent entry is held out

    Args:
        train: Remaining entries, same index maps as the source matrix
        test: One position per user with at least one interaction
        test_values: Ratings at the test positions
        test_timestamps: Timestamps at the test positions
    """

    train: SparseMatrix
    test: EntrySet
    test_values: np.ndarray
    test_timestamps: np.ndarray

    def test_interactions(self) -> InteractionSet:
        return InteractionSet(
            pd.DataFrame(
                {
                    "user_id": self.train.user_tokens[self.test.rows],
                    "item_id": self.train.item_tokens[self.test.cols],
                    "rating": self.test_values,
                    "timestamp": self.test_timestamps,
                }
            )
        )


def holdout_last_interaction(matrix: SparseMatrix) -> HoldoutSplit:
    """
    Hold out each user's final interaction

    The entry with the largest timestamp goes to the test split; equal
    timestamps are resolved in favour of the largest column index.

    Raises:
        UnsupportedOperationError: Matrix has missing timestamps
    """
    if not matrix.has_timestamps:
        raise UnsupportedOperationError("leave-last-out holdout requires timestamps on every entry")

    order = np.lexsort((matrix.cols, matrix.timestamps, matrix.rows))
    sorted_rows = matrix.rows[order]
    is_last = np.ones(len(order), dtype=bool)
    is_last[:-1] = sorted_rows[1:] != sorted_rows[:-1]
    test_index = order[is_last]

    train_mask = np.ones(matrix.nnz, dtype=bool)
    train_mask[test_index] = False

    split = HoldoutSplit(
        train=matrix.select(train_mask),
        test=EntrySet(matrix.rows[test_index], matrix.cols[test_index], EntryKind.TEST),
        test_values=_freeze(matrix.values[test_index].copy()),
        test_timestamps=_freeze(matrix.timestamps[test_index].copy()),
    )
    log.info_event("holdout_split", {"train": split.train.nnz, "test": len(split.test)})
    return split


def partition_indices(nnz: int, n_folds: int, seed: int) -> List[np.ndarray]:
    """
    Seeded balanced partition of range(nnz) into n_folds sorted index arrays

    Fold sizes differ by at most one; the first nnz % n_folds folds are larger.
    """
    if n_folds < 2:
        raise InvalidArgumentError(f"n_folds must be >= 2, got {n_folds}")
    if n_folds > nnz:
        raise InvalidArgumentError(f"n_folds ({n_folds}) exceeds the number of entries ({nnz})")
    permutation = np.random.default_rng(seed).permutation(nnz)
    return [np.sort(chunk) for chunk in np.array_split(permutation, n_folds)]


def partition_entries(matrix: SparseMatrix, n_folds: int, seed: int) -> List[EntrySet]:
    """
    Split the observed entries into disjoint folds

    Args:
        matrix: Source matrix
        n_folds: Number of folds (>= 2, <= nnz)
        seed: Shuffle seed

    Returns:
        n_folds disjoint EntrySets whose union is the observed set
    """
    return [
        EntrySet(matrix.rows[index], matrix.cols[index], EntryKind.FOLD)
        for index in partition_indices(matrix.nnz, n_folds, seed)
    ]
