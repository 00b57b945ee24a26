import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.data.interactions import InteractionRecord, InteractionSet, load_interactions
from src.data.matrix import (
    DedupPolicy,
    EntryKind,
    EntrySet,
    build_matrix,
    holdout_last_interaction,
    partition_entries,
    partition_indices,
)
from src.utils.errors import EmptyInputError, InvalidArgumentError, UnsupportedOperationError
from tests.factories import random_matrix


def _records(*rows):
    return InteractionSet.from_records([InteractionRecord(*row) for row in rows])


class TestBuildMatrix:
    def test_index_maps_follow_first_appearance(self, toy_csv):
        matrix = build_matrix(load_interactions(toy_csv))

        assert list(matrix.user_tokens) == ["u1", "u2"]
        assert list(matrix.item_tokens) == ["i1", "i2"]
        assert matrix.user_index == {"u1": 0, "u2": 1}
        np.testing.assert_array_equal(matrix.to_dense(), [[5.0, 3.0], [4.0, 0.0]])

    def test_keep_last_by_timestamp(self):
        matrix = build_matrix(_records(("u1", "i1", 5.0, 2), ("u1", "i1", 3.0, 1)))
        assert matrix.nnz == 1
        assert matrix.values[0] == 5.0
        assert matrix.timestamps[0] == 2

    def test_keep_last_tie_goes_to_later_record(self):
        matrix = build_matrix(_records(("u1", "i1", 5.0, 7), ("u1", "i1", 3.0, 7)))
        assert matrix.values[0] == 3.0

    def test_mean_policy(self):
        matrix = build_matrix(_records(("u1", "i1", 5.0), ("u1", "i1", 3.0)), DedupPolicy.MEAN)
        assert matrix.nnz == 1
        assert matrix.values[0] == 4.0

    def test_zero_ratings_dropped(self):
        matrix = build_matrix(_records(("u1", "i1", 0.0, 1), ("u1", "i2", 2.0, 1)))
        assert matrix.nnz == 1
        assert matrix.n_items == 2

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            build_matrix(_records())

    def test_hundred_thousand_unique_records(self):
        rng = np.random.default_rng(3)
        keys = rng.choice(1000 * 1000, size=100_000, replace=False)
        frame = pd.DataFrame({
            "user_id": [f"u{k}" for k in (keys // 1000).tolist()],
            "item_id": [f"i{k}" for k in (keys % 1000).tolist()],
            "rating": rng.integers(1, 6, size=len(keys)).astype(np.float64),
            "timestamp": np.arange(len(keys), dtype=np.int64),
        })

        matrix = build_matrix(InteractionSet(frame))

        assert matrix.nnz == len(set(zip(frame["user_id"], frame["item_id"]))) == 100_000

    def test_entries_survive_interaction_export(self, small_matrix):
        def triples(matrix):
            return {
                (matrix.user_tokens[r], matrix.item_tokens[c], v, t)
                for r, c, v, t in zip(matrix.rows, matrix.cols, matrix.values, matrix.timestamps)
            }

        rebuilt = build_matrix(small_matrix.to_interactions())

        assert rebuilt.nnz == small_matrix.nnz
        assert triples(rebuilt) == triples(small_matrix)


class TestLookup:
    def test_values_at_reads_zero_off_support(self, toy_csv):
        matrix = build_matrix(load_interactions(toy_csv))
        positions = EntrySet(np.array([0, 1]), np.array([1, 1]), EntryKind.PERT)
        np.testing.assert_array_equal(matrix.values_at(positions), [3.0, 0.0])

    def test_locate_out_of_bounds(self, small_matrix):
        with pytest.raises(InvalidArgumentError):
            small_matrix.locate(np.array([small_matrix.n_users]), np.array([0]))

    def test_entry_set_rejects_duplicates(self):
        with pytest.raises(InvalidArgumentError):
            EntrySet(np.array([1, 1]), np.array([2, 2]), EntryKind.FOLD)

    def test_matrix_is_read_only(self, small_matrix):
        with pytest.raises(ValueError):
            small_matrix.values[0] = 1.0


class TestHoldout:
    def test_last_interaction_held_out(self):
        matrix = build_matrix(_records(
            ("u1", "a", 1.0, 1), ("u1", "b", 2.0, 3), ("u1", "c", 3.0, 2), ("u2", "a", 4.0, 9),
        ))

        split = holdout_last_interaction(matrix)

        assert split.test.positions() == [(0, 1), (1, 0)]
        np.testing.assert_array_equal(split.test_values, [2.0, 4.0])
        # a user with a single interaction keeps no training entries
        assert split.train.user_counts.tolist() == [2, 0]
        assert split.train.shape == matrix.shape

    def test_tie_goes_to_largest_column(self):
        matrix = build_matrix(_records(("u1", "a", 1.0, 5), ("u1", "b", 2.0, 5)))
        split = holdout_last_interaction(matrix)
        assert split.test.positions() == [(0, 1)]

    def test_matches_scan(self):
        matrix = random_matrix(seed=21, n=50, m=30, density=0.3)

        split = holdout_last_interaction(matrix)

        expected = []
        for user in range(matrix.n_users):
            entries = [
                (int(matrix.timestamps[i]), int(matrix.cols[i]))
                for i in range(matrix.nnz) if matrix.rows[i] == user
            ]
            if entries:
                expected.append((user, max(entries)[1]))
        assert split.test.positions() == expected
        assert split.train.nnz + len(split.test) == matrix.nnz

    def test_requires_timestamps(self):
        matrix = random_matrix(seed=1, with_timestamps=False)
        with pytest.raises(UnsupportedOperationError):
            holdout_last_interaction(matrix)


class TestPartition:
    def test_balanced_sizes(self):
        assert [len(f) for f in partition_indices(100, 10, seed=0)] == [10] * 10
        assert sorted(len(f) for f in partition_indices(7, 3, seed=0)) == [2, 2, 3]

    def test_deterministic(self):
        first = partition_indices(500, 7, seed=4)
        second = partition_indices(500, 7, seed=4)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    @pytest.mark.parametrize("n_folds", [1, 11])
    def test_invalid_fold_count(self, n_folds):
        with pytest.raises(InvalidArgumentError):
            partition_indices(10, n_folds, seed=0)

    @settings(max_examples=50, deadline=None)
    @given(nnz=st.integers(2, 400), data=st.data())
    def test_folds_cover_entries_once(self, nnz, data):
        n_folds = data.draw(st.integers(2, nnz))
        folds = partition_indices(nnz, n_folds, seed=data.draw(st.integers(0, 2**32 - 1)))

        combined = np.concatenate(folds)
        assert np.array_equal(np.sort(combined), np.arange(nnz))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_partition_entries(self, small_matrix):
        folds = partition_entries(small_matrix, 5, seed=2)
        union = EntrySet.union(folds, EntryKind.FOLD)
        assert len(union) == small_matrix.nnz
        assert all(f.kind is EntryKind.FOLD for f in folds)
