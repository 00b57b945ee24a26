"""
Structural Complexity Toolkit - Truncated SVD

Randomized range finder followed by subspace iteration run to convergence,
then a small dense SVD of the projected matrix.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from src.data.cache import factors_from_bytes, factors_to_bytes
from src.data.matrix import SparseMatrix
from src.utils import logging as log
from src.utils.errors import InvalidArgumentError, NumericInputError

MatrixLike = Union[SparseMatrix, sp.spmatrix, np.ndarray]


class SvdQuality(BaseModel):
    """
    Accuracy knobs for truncated_svd

    power_iterations is the minimum number of subspace iterations; iteration
    continues until the leading k Ritz values move by at most tolerance * sigma_1
    between sweeps, or max_power_iterations is reached.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    oversampling: int = Field(default=10, ge=0)
    power_iterations: int = Field(default=4, ge=0)
    seed: int = Field(default=0, ge=0)
    max_power_iterations: int = Field(default=300, ge=0)
    tolerance: float = Field(default=1e-12, gt=0.0)


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """
    Rank-k factors with u (n x k), sigma (k, non-increasing) and v (m x k)
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.ndim != 2 or self.v.ndim != 2 or self.sigma.ndim != 1:
            raise InvalidArgumentError("u and v must be 2-D, sigma 1-D")
        if not (self.u.shape[1] == self.v.shape[1] == len(self.sigma)):
            raise InvalidArgumentError("factor ranks disagree")
        for array in (self.u, self.sigma, self.v):
            array.setflags(write=False)

    @property
    def k(self) -> int:
        return len(self.sigma)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def to_bytes(self) -> bytes:
        return factors_to_bytes(self.u, self.sigma, self.v)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SvdFactors":
        return cls(*factors_from_bytes(data))

    def save(self, path: Union[str, Path]) -> Path:
        """Write as SCF1"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SvdFactors":
        return cls.from_bytes(Path(path).read_bytes())

    def __repr__(self) -> str:
        return f"SvdFactors(shape={self.shape}, k={self.k}, sigma_1={self.sigma[0] if self.k else 0.0:.6g})"


def as_operator(matrix: MatrixLike) -> Union[sp.csr_matrix, np.ndarray]:
    if isinstance(matrix, SparseMatrix):
        return matrix.csr
    if sp.issparse(matrix):
        operator = sp.csr_matrix(matrix, dtype=np.float64)
        if not np.isfinite(operator.data).all():
            raise NumericInputError("matrix contains non-finite entries")
        return operator
    operator = np.asarray(matrix, dtype=np.float64)
    if operator.ndim != 2:
        raise InvalidArgumentError("matrix must be 2-D")
    if not np.isfinite(operator).all():
        raise NumericInputError("matrix contains non-finite entries")
    return operator


def _orthonormal_basis(block: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(block)
    return q


def _canonicalize_signs(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flip each singular pair so the first nonzero coordinate of its u-column is >= 0"""
    magnitude = np.abs(u)
    threshold = np.finfo(np.float64).eps * magnitude.max(axis=0, initial=0.0)
    first = np.argmax(magnitude > threshold, axis=0)
    signs = np.where(u[first, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs, v * signs


def truncated_svd(matrix: MatrixLike, k: int, quality: SvdQuality = SvdQuality()) -> SvdFactors:
    """
    Best rank-k factors by randomized subspace iteration

    Args:
        matrix: Matrix to factor (SparseMatrix, scipy sparse or dense array)
        k: Rank, 1 <= k <= min(n, m)
        quality: Oversampling, iteration and seed settings

    Returns:
        SvdFactors with canonical signs

    Raises:
        InvalidArgumentError: k out of range
        NumericInputError: Non-finite entries
    """
    a = as_operator(matrix)
    n, m = a.shape
    if not 1 <= k <= min(n, m):
        raise InvalidArgumentError(f"k={k} must lie in [1, {min(n, m)}]")

    rng = np.random.default_rng(quality.seed)
    block = min(k + quality.oversampling, n, m)
    q = _orthonormal_basis(a @ rng.standard_normal((m, block)))

    max_iterations = max(quality.max_power_iterations, quality.power_iterations)
    previous = None
    iterations = 0
    converged = False
    while True:
        w = np.asarray(a.T @ q)
        ritz = np.linalg.svd(w, compute_uv=False)[:k]
        if iterations >= quality.power_iterations and previous is not None:
            if np.max(np.abs(ritz - previous)) <= quality.tolerance * ritz[0]:
                converged = True
                break
        if block == min(n, m) and iterations >= quality.power_iterations:
            # The sketch already spans the whole space
            converged = True
            break
        if iterations >= max_iterations:
            break
        previous = ritz
        q = _orthonormal_basis(np.asarray(a @ _orthonormal_basis(w)))
        iterations += 1

    u_small, sigma, vt = np.linalg.svd(w.T, full_matrices=False)
    u, v = _canonicalize_signs(q @ u_small[:, :k], vt[:k].T)

    if not converged:
        log.warning_event("svd_not_converged", {"k": k, "iterations": iterations})
    log.debug_event("svd_computed", {
        "shape": [n, m], "k": k, "iterations": iterations, "sigma_1": float(sigma[0]),
    })
    return SvdFactors(np.ascontiguousarray(u), np.ascontiguousarray(sigma[:k]), np.ascontiguousarray(v))


def project_columns(matrix: MatrixLike, v: np.ndarray) -> np.ndarray:
    """
    Sparse-dense product M V

    Args:
        matrix: n x m matrix
        v: m x k array

    Returns:
        n x k array
    """
    a = as_operator(matrix)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"v has shape {v.shape}, expected ({a.shape[1]}, k)")
    return np.asarray(a @ v)


def reconstruct(factors: SvdFactors) -> np.ndarray:
    """Dense U diag(sigma) V^T; small matrices only"""
    return (factors.u * factors.sigma) @ factors.v.T
