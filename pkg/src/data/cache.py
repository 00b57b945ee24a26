"""
Structural Complexity Toolkit - Binary Caches

Versioned little-endian containers for matrices (SCM1), SVD factors (SCF1)
and score tables (SCS1). Every count is a u64; arrays follow their counts.
"""

from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.data.matrix import SparseMatrix
from src.utils.errors import CacheFormatError

MATRIX_MAGIC = b"SCM1"
FACTORS_MAGIC = b"SCF1"
SCORES_MAGIC = b"SCS1"

_U64 = np.dtype("<u8")
_I64 = np.dtype("<i8")
_F64 = np.dtype("<f8")


class _Writer:
    def __init__(self, magic: bytes):
        self.chunks: List[bytes] = [magic]

    def count(self, *values: int):
        self.chunks.append(np.asarray(values, dtype=_U64).tobytes())

    def array(self, values: np.ndarray, dtype: np.dtype):
        self.chunks.append(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def blob(self, data: bytes):
        self.count(len(data))
        self.chunks.append(data)

    def tokens(self, tokens: Sequence[str]):
        for token in tokens:
            self.blob(str(token).encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes, magic: bytes):
        self.view = memoryview(data)
        self.offset = 0
        found = bytes(self._take(len(magic)))
        if found != magic:
            raise CacheFormatError(f"expected magic {magic!r}, found {found!r}")

    def _take(self, size: int) -> memoryview:
        end = self.offset + size
        if size < 0 or end > len(self.view):
            raise CacheFormatError(f"truncated cache: need {size} bytes at offset {self.offset}")
        chunk = self.view[self.offset:end]
        self.offset = end
        return chunk

    def count(self, n: int = 1) -> Tuple[int, ...]:
        values = np.frombuffer(self._take(8 * n), dtype=_U64)
        return tuple(int(v) for v in values)

    def array(self, length: int, dtype: np.dtype) -> np.ndarray:
        return np.frombuffer(self._take(length * dtype.itemsize), dtype=dtype).astype(dtype.newbyteorder("="))

    def blob(self) -> bytes:
        (length,) = self.count()
        return bytes(self._take(length))

    def tokens(self, n: int) -> np.ndarray:
        try:
            return np.array([self.blob().decode("utf-8") for _ in range(n)], dtype=object)
        except UnicodeDecodeError as e:
            raise CacheFormatError("token table is not valid UTF-8") from e

    def finish(self):
        if self.offset != len(self.view):
            raise CacheFormatError(f"{len(self.view) - self.offset} trailing bytes in cache")


def _write_matrix_body(writer: _Writer, matrix: SparseMatrix):
    writer.count(matrix.n_users, matrix.n_items, matrix.nnz)
    writer.array(matrix.csr.indptr, _I64)
    writer.array(matrix.cols, _I64)
    writer.array(matrix.values, _F64)
    writer.array(matrix.timestamps, _I64)
    writer.tokens(matrix.user_tokens)
    writer.tokens(matrix.item_tokens)


def _read_matrix_body(reader: _Reader) -> SparseMatrix:
    n_users, n_items, nnz = reader.count(3)
    indptr = reader.array(n_users + 1, _I64)
    cols = reader.array(nnz, _I64)
    values = reader.array(nnz, _F64)
    timestamps = reader.array(nnz, _I64)
    user_tokens = reader.tokens(n_users)
    item_tokens = reader.tokens(n_items)
    if indptr[0] != 0 or indptr[-1] != nnz or (np.diff(indptr) < 0).any():
        raise CacheFormatError("corrupt row pointer array")
    rows = np.repeat(np.arange(n_users, dtype=np.int64), np.diff(indptr))
    return SparseMatrix.from_entries(rows, cols, values, timestamps, user_tokens, item_tokens)


def matrix_to_bytes(matrix: SparseMatrix) -> bytes:
    writer = _Writer(MATRIX_MAGIC)
    _write_matrix_body(writer, matrix)
    return writer.getvalue()


def matrix_from_bytes(data: bytes) -> SparseMatrix:
    reader = _Reader(data, MATRIX_MAGIC)
    matrix = _read_matrix_body(reader)
    reader.finish()
    return matrix


def save_matrix(matrix: SparseMatrix, path: Union[str, Path]) -> Path:
    """Write a matrix as SCM1"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(matrix_to_bytes(matrix))
    return path


def load_matrix(path: Union[str, Path]) -> SparseMatrix:
    """Read an SCM1 matrix; raises CacheFormatError on a bad header or short payload"""
    return matrix_from_bytes(Path(path).read_bytes())


def factors_to_bytes(u: np.ndarray, sigma: np.ndarray, v: np.ndarray) -> bytes:
    writer = _Writer(FACTORS_MAGIC)
    n, k = u.shape
    m = v.shape[0]
    writer.count(n, m, k)
    writer.array(u, _F64)
    writer.array(sigma, _F64)
    writer.array(v, _F64)
    return writer.getvalue()


def factors_from_bytes(data: bytes) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode SCF1 into (u, sigma, v) arrays"""
    reader = _Reader(data, FACTORS_MAGIC)
    n, m, k = reader.count(3)
    u = reader.array(n * k, _F64).reshape(n, k)
    sigma = reader.array(k, _F64)
    v = reader.array(m * k, _F64).reshape(m, k)
    reader.finish()
    return u, sigma, v


def scores_to_bytes(matrix: SparseMatrix, scores: np.ndarray, folds: np.ndarray, params_json: bytes) -> bytes:
    """
    Encode a score table as SCS1

    Layout: magic, params JSON blob, u64 nnz, f64 scores, i64 folds (both in
    the matrix's CSR entry order), then the embedded matrix body.
    """
    writer = _Writer(SCORES_MAGIC)
    writer.blob(params_json)
    writer.count(len(scores))
    writer.array(scores, _F64)
    writer.array(folds, _I64)
    _write_matrix_body(writer, matrix)
    return writer.getvalue()


def scores_from_bytes(data: bytes) -> Tuple[SparseMatrix, np.ndarray, np.ndarray, bytes]:
    reader = _Reader(data, SCORES_MAGIC)
    params_json = reader.blob()
    (n_scores,) = reader.count()
    scores = reader.array(n_scores, _F64)
    folds = reader.array(n_scores, _I64)
    matrix = _read_matrix_body(reader)
    reader.finish()
    if matrix.nnz != n_scores:
        raise CacheFormatError(f"score count {n_scores} does not match matrix nnz {matrix.nnz}")
    return matrix, scores, folds, params_json
