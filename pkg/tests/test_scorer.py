import io
import math

import numpy as np
import pytest

from src.data.matrix import partition_entries
from src.spectral.metrics import gramian_diagonal
from src.spectral.perturbation import PerturbationParams, apply_perturbation, plan_for_entries
from src.spectral.scorer import ScoreTable, fold_rng, score_fold, score_ratings
from src.spectral.svd import SvdQuality, truncated_svd
from src.utils.errors import UnsupportedOperationError
from tests.factories import low_rank_dense, matrix_from_dense, random_matrix

PARAMS = PerturbationParams(alpha=0.7, seed=3)


@pytest.fixture(scope="module")
def thousand_entries():
    rng = np.random.default_rng(0)
    keys = rng.choice(50 * 40, size=1000, replace=False)
    dense = np.zeros(50 * 40)
    dense[keys] = rng.integers(1, 6, size=1000)
    return matrix_from_dense(dense.reshape(50, 40), rng.integers(0, 10**6, size=(50, 40)))


@pytest.fixture(scope="module")
def thousand_scores(thousand_entries):
    return score_ratings(thousand_entries, n_folds=10, params=PARAMS, k=5, threads=1)


def test_every_entry_scored(thousand_entries, thousand_scores):
    assert len(thousand_scores) == thousand_entries.nnz == 1000
    assert np.isfinite(thousand_scores.scores).all()
    assert (thousand_scores.scores >= 0).all()
    assert np.bincount(thousand_scores.folds).tolist() == [100] * 10
    assert [s.n_scored for s in thousand_scores.summaries] == [100] * 10
    # 70 value-shuffled and 30 relocated entries per fold
    assert [s.n_added for s in thousand_scores.summaries] == [30] * 10


def test_fold_rmse_aggregates_scores(thousand_scores):
    for summary in thousand_scores.summaries:
        fold_scores = thousand_scores.scores[thousand_scores.folds == summary.fold]
        expected = math.sqrt(np.mean(fold_scores ** 2))
        assert summary.rmse_scored == pytest.approx(expected, rel=1e-12)


def test_fold_recomputes_alone(thousand_entries, thousand_scores):
    folds = partition_entries(thousand_entries, 10, PARAMS.seed)

    result = score_fold(thousand_entries, folds[3], 3, PARAMS, 5, SvdQuality())

    np.testing.assert_array_equal(result["scores"], thousand_scores.scores[result["index"]])
    assert (thousand_scores.folds[result["index"]] == 3).all()


def test_deterministic(thousand_entries, thousand_scores):
    again = score_ratings(thousand_entries, n_folds=10, params=PARAMS, k=5, threads=1)
    np.testing.assert_array_equal(again.scores, thousand_scores.scores)
    np.testing.assert_array_equal(again.folds, thousand_scores.folds)


def test_worker_count_does_not_change_scores(thousand_entries, thousand_scores):
    parallel = score_ratings(thousand_entries, n_folds=10, params=PARAMS, k=5, threads=2)
    np.testing.assert_allclose(parallel.scores, thousand_scores.scores, rtol=1e-10, atol=1e-10)


def test_fold_generators_are_independent():
    first = fold_rng(7, 0).random(4)
    assert not np.array_equal(first, fold_rng(7, 1).random(4))
    np.testing.assert_array_equal(first, fold_rng(7, 0).random(4))


def test_time_weighting_needs_timestamps():
    matrix = random_matrix(seed=4, with_timestamps=False)
    with pytest.raises(UnsupportedOperationError):
        score_ratings(matrix, n_folds=3, params=PerturbationParams(time_weighted=True), k=3, threads=1)


def _planted(seed):
    rng = np.random.default_rng(seed)
    dense = low_rank_dense(rng, 30, 20, 3)
    mask = rng.random((30, 20)) < 0.8
    dense = np.where(mask, dense, 0.0)
    observed = np.argwhere(mask)
    target = tuple(observed[rng.integers(len(observed))])
    dense[target] += 20.0
    return matrix_from_dense(dense), target


@pytest.mark.slow
def test_planted_anomaly_ranks_high():
    hits = 0
    for seed in range(20):
        matrix, target = _planted(seed)
        table = score_ratings(matrix, n_folds=10, params=PerturbationParams(seed=seed), k=3, threads=1)
        top = np.argsort(table.scores)[::-1][:3]
        hits += any((matrix.rows[i], matrix.cols[i]) == target for i in top)
    assert hits >= 18


def test_planted_anomaly_score_matches_dense_recomputation():
    matrix, target = _planted(0)
    params = PerturbationParams(seed=0)
    quality = SvdQuality()
    table = score_ratings(matrix, n_folds=10, params=params, k=3, quality=quality, threads=1)
    found, index = matrix.locate(np.array([target[0]]), np.array([target[1]]))
    fold = int(table.folds[index[0]])

    candidates = partition_entries(matrix, 10, params.seed)[fold]
    plan = plan_for_entries(matrix, candidates, params, fold_rng(params.seed, fold))
    perturbed = apply_perturbation(matrix, plan)
    factors = truncated_svd(perturbed, 3, quality)
    gram = gramian_diagonal(matrix.to_dense(), perturbed.to_dense(), factors.v)
    corrected = np.sqrt(np.maximum(factors.sigma ** 2 + gram, 0.0))
    prediction = (factors.u * corrected) @ factors.v.T

    expected = abs(matrix.to_dense()[target] - prediction[target])
    assert found[0]
    assert table.scores[index[0]] == pytest.approx(expected, rel=1e-6)


def test_csv_round_trip(thousand_scores):
    sink = io.StringIO()
    thousand_scores.to_csv(sink)
    lines = sink.getvalue().splitlines()
    assert lines[0] == "user_token,item_token,rating,timestamp,fold,score"
    assert len(lines) == 1001

    restored = ScoreTable.from_csv(io.StringIO(sink.getvalue()), thousand_scores.metadata())

    original = thousand_scores.matrix
    by_token = {
        (original.user_tokens[r], original.item_tokens[c]): s
        for r, c, s in zip(original.rows, original.cols, thousand_scores.scores)
    }
    m = restored.matrix
    for r, c, s in zip(m.rows, m.cols, restored.scores):
        assert by_token[(m.user_tokens[r], m.item_tokens[c])] == pytest.approx(s, rel=1e-15)
    assert restored.params == PARAMS
    assert restored.n_folds == 10 and restored.k == 5
