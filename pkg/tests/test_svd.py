import numpy as np
import pytest
import scipy.sparse as sp

from src.spectral.svd import SvdQuality, project_columns, reconstruct, truncated_svd
from src.utils.config import thread_limits
from src.utils.errors import InvalidArgumentError, NumericInputError
from tests.factories import low_rank_dense, matrix_from_dense, random_dense


def _dense_spectrum(matrix, k):
    return np.linalg.svd(matrix.to_dense(), compute_uv=False)[:k]


def test_diagonal_example():
    factors = truncated_svd(np.diag([3.0, 1.0]), 1)

    np.testing.assert_allclose(factors.sigma, [3.0], atol=1e-12)
    np.testing.assert_allclose(factors.u[:, 0], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(factors.v[:, 0], [1.0, 0.0], atol=1e-12)


def test_rank_one_example():
    factors = truncated_svd(np.array([[2.0, 4.0], [1.0, 2.0]]), 2)
    np.testing.assert_allclose(factors.sigma, [5.0, 0.0], atol=1e-10)


def test_matches_dense_svd():
    matrix = matrix_from_dense(random_dense(np.random.default_rng(0), 60, 40, 0.3))

    factors = truncated_svd(matrix, 10)

    np.testing.assert_allclose(factors.sigma, _dense_spectrum(matrix, 10), rtol=1e-6)


@pytest.mark.slow
def test_random_sparse_matrices_against_dense():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n, m = (int(x) for x in rng.integers(20, 201, size=2))
        matrix = matrix_from_dense(random_dense(rng, n, m, float(rng.uniform(0.05, 0.5))))
        k = int(rng.integers(1, min(20, n, m) + 1))

        factors = truncated_svd(matrix, k, SvdQuality(seed=int(rng.integers(1000))))

        expected = _dense_spectrum(matrix, k)
        # exact zeros in the spectrum (empty rows or columns) only get an absolute bound
        np.testing.assert_allclose(factors.sigma, expected, rtol=1e-6, atol=1e-9 * expected[0])


def test_exact_low_rank_reconstruction():
    dense = low_rank_dense(np.random.default_rng(3), 40, 30, 5)

    factors = truncated_svd(dense, 5)

    error = np.linalg.norm(dense - reconstruct(factors)) / np.linalg.norm(dense)
    assert error <= 1e-6


def test_factor_invariants():
    matrix = matrix_from_dense(random_dense(np.random.default_rng(4), 50, 35, 0.25))

    factors = truncated_svd(matrix, 8)

    assert factors.u.shape == (50, 8) and factors.v.shape == (35, 8)
    np.testing.assert_allclose(factors.u.T @ factors.u, np.eye(8), atol=1e-8)
    np.testing.assert_allclose(factors.v.T @ factors.v, np.eye(8), atol=1e-8)
    assert (np.diff(factors.sigma) <= 0).all()
    assert (factors.sigma >= 0).all()
    for r in range(8):
        column = factors.u[:, r]
        first = np.flatnonzero(np.abs(column) > 1e-12)[0]
        assert column[first] >= 0


def test_same_seed_same_factors():
    matrix = matrix_from_dense(random_dense(np.random.default_rng(5), 45, 30, 0.3))
    quality = SvdQuality(seed=8)

    first = truncated_svd(matrix, 6, quality)
    second = truncated_svd(matrix, 6, quality)

    np.testing.assert_array_equal(first.sigma, second.sigma)
    np.testing.assert_array_equal(first.u, second.u)
    np.testing.assert_array_equal(first.v, second.v)


def test_thread_count_does_not_change_result():
    matrix = matrix_from_dense(random_dense(np.random.default_rng(6), 80, 60, 0.2))

    with thread_limits(1):
        single = truncated_svd(matrix, 10)
    with thread_limits(2):
        double = truncated_svd(matrix, 10)

    np.testing.assert_allclose(single.sigma, double.sigma, rtol=1e-10)


def test_accepts_scipy_and_dense_input():
    dense = random_dense(np.random.default_rng(7), 20, 15, 0.4)
    from_dense = truncated_svd(dense, 4)
    from_sparse = truncated_svd(sp.csr_matrix(dense), 4)
    np.testing.assert_allclose(from_dense.sigma, from_sparse.sigma, rtol=1e-9)


@pytest.mark.parametrize("k", [0, 16])
def test_rank_out_of_range(k):
    with pytest.raises(InvalidArgumentError):
        truncated_svd(np.ones((20, 15)), k)


def test_non_finite_input():
    dense = np.ones((5, 5))
    dense[2, 2] = np.nan
    with pytest.raises(NumericInputError):
        truncated_svd(dense, 2)


class TestProjectColumns:
    def test_unit_vector_selects_column(self):
        dense = random_dense(np.random.default_rng(8), 10, 6, 0.5)
        e = np.zeros((6, 1))
        e[2, 0] = 1.0
        np.testing.assert_array_equal(project_columns(matrix_from_dense(dense), e)[:, 0], dense[:, 2])

    def test_matches_dense_product(self):
        rng = np.random.default_rng(9)
        dense = random_dense(rng, 30, 20, 0.3)
        v = rng.standard_normal((20, 4))
        np.testing.assert_allclose(project_columns(matrix_from_dense(dense), v), dense @ v, rtol=1e-12, atol=1e-12)

    def test_zero_matrix(self):
        assert not project_columns(sp.csr_matrix((5, 4)), np.ones((4, 2))).any()

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            project_columns(np.ones((5, 4)), np.ones((3, 2)))
