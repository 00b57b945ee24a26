import numpy as np
import pytest

from src.data import provider as provider_module
from src.data.cache import (
    MATRIX_MAGIC,
    load_matrix,
    matrix_from_bytes,
    matrix_to_bytes,
    save_matrix,
)
from src.data.provider import InteractionProvider
from src.spectral.scorer import ScoreTable
from src.spectral.svd import SvdFactors, truncated_svd
from src.utils.errors import CacheFormatError


def _assert_same_matrix(a, b):
    assert a.shape == b.shape
    np.testing.assert_array_equal(a.csr.indptr, b.csr.indptr)
    np.testing.assert_array_equal(a.cols, b.cols)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.timestamps, b.timestamps)
    assert list(a.user_tokens) == list(b.user_tokens)
    assert list(a.item_tokens) == list(b.item_tokens)


def test_matrix_file_round_trip(small_matrix, tmp_path):
    path = save_matrix(small_matrix, tmp_path / "m.scm")

    assert path.read_bytes()[:len(MATRIX_MAGIC)] == MATRIX_MAGIC
    _assert_same_matrix(load_matrix(path), small_matrix)


def test_bad_magic(small_matrix):
    data = bytearray(matrix_to_bytes(small_matrix))
    data[0:4] = b"XXXX"
    with pytest.raises(CacheFormatError):
        matrix_from_bytes(bytes(data))


@pytest.mark.parametrize("cut", [3, 20, -1])
def test_truncated_payload(small_matrix, cut):
    data = matrix_to_bytes(small_matrix)
    with pytest.raises(CacheFormatError):
        matrix_from_bytes(data[:cut])


def test_trailing_bytes(small_matrix):
    with pytest.raises(CacheFormatError):
        matrix_from_bytes(matrix_to_bytes(small_matrix) + b"\0")


def test_factors_round_trip(small_matrix, tmp_path):
    factors = truncated_svd(small_matrix, 4)

    loaded = SvdFactors.load(factors.save(tmp_path / "f.scf"))

    np.testing.assert_array_equal(loaded.u, factors.u)
    np.testing.assert_array_equal(loaded.sigma, factors.sigma)
    np.testing.assert_array_equal(loaded.v, factors.v)


def test_score_table_round_trip(small_matrix, tmp_path):
    rng = np.random.default_rng(0)
    table = ScoreTable(
        matrix=small_matrix,
        scores=rng.random(small_matrix.nnz),
        folds=rng.integers(0, 5, size=small_matrix.nnz),
        n_folds=5,
        k=3,
    )

    loaded = ScoreTable.load(table.save(tmp_path / "s.scs"))

    _assert_same_matrix(loaded.matrix, small_matrix)
    np.testing.assert_array_equal(loaded.scores, table.scores)
    np.testing.assert_array_equal(loaded.folds, table.folds)
    assert loaded.n_folds == 5 and loaded.k == 3 and loaded.params is None


class TestProvider:
    def test_memory_cache(self, toy_csv, mocker):
        spy = mocker.spy(provider_module, "build_matrix")
        provider = InteractionProvider()

        first = provider.get_matrix(toy_csv)
        second = provider.get_matrix(toy_csv)

        assert first is second
        assert spy.call_count == 1
        stats = provider.get_cache_stats()
        assert stats["requests"] == 2
        assert stats["cache_hits"] == 1

    def test_disk_cache_shared_between_providers(self, toy_csv, tmp_path, mocker):
        InteractionProvider(tmp_path).get_matrix(toy_csv)
        assert len(list(tmp_path.glob("matrix_*.scm"))) == 1

        spy = mocker.spy(provider_module, "build_matrix")
        provider = InteractionProvider(tmp_path)
        matrix = provider.get_matrix(toy_csv)

        assert spy.call_count == 0
        assert provider.get_cache_stats()["disk_hits"] == 1
        assert matrix.nnz == 3

    def test_corrupt_cache_file_is_rebuilt(self, toy_csv, tmp_path):
        InteractionProvider(tmp_path).get_matrix(toy_csv)
        path = next(tmp_path.glob("matrix_*.scm"))
        path.write_bytes(b"garbage")

        matrix = InteractionProvider(tmp_path).get_matrix(toy_csv)

        assert matrix.nnz == 3
        assert load_matrix(path).nnz == 3

    def test_cache_bypass(self, toy_csv, mocker):
        spy = mocker.spy(provider_module, "build_matrix")
        provider = InteractionProvider()
        provider.get_matrix(toy_csv, use_cache=False)
        provider.get_matrix(toy_csv, use_cache=False)
        assert spy.call_count == 2
