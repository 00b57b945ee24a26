"""
Structural Complexity Toolkit - Structural Consistency Metrics

Singular-value correction from Gramian diagonals, the corrected predictor
U (Sigma + dSigma) V^T evaluated lazily at positions, and the RMSE, RMSE_SC
and spectral-distance scores.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from src import __version__
from src.data.matrix import EntrySet, SparseMatrix
from src.spectral.perturbation import (
    PerturbationParams,
    PerturbationPlan,
    apply_perturbation,
    select_perturbation_sets,
)
from src.spectral.svd import MatrixLike, SvdFactors, SvdQuality, project_columns, truncated_svd
from src.utils import logging as log
from src.utils.errors import InvalidArgumentError, RatioUndefinedError

REPORT_SCHEMA = "sc.complexity_report/1"

# Positions evaluated per block in predict_entries
PREDICT_CHUNK = 65536


@dataclass(frozen=True, eq=False)
class DeltaSigma:
    """
    Correction to the perturbed singular values

    Args:
        values: dSigma_ii, one per retained singular value
        clamped_count: How many square-root arguments were negative and clamped to 0
    """

    values: np.ndarray
    clamped_count: int = 0

    @classmethod
    def zeros(cls, k: int) -> "DeltaSigma":
        return cls(np.zeros(k), 0)

    @property
    def k(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class PlanEvaluation:
    """Intermediate products of one perturb-factor-correct-predict run"""

    perturbed: SparseMatrix
    factors: SvdFactors
    correction: DeltaSigma
    positions: EntrySet
    predictions: np.ndarray
    truth: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        return self.truth - self.predictions


@dataclass
class ComplexityReport:
    rmse: float
    rmse_svd: float
    rmse_sc: Optional[float]
    d_sc: float
    params: PerturbationParams
    quality: SvdQuality
    k: int
    n_pert: int
    n_val: int
    n_remove: int
    n_add: int
    clamped_count: int
    sigma: np.ndarray
    delta_sigma: np.ndarray
    elapsed_seconds: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            "schema": REPORT_SCHEMA,
            "version": __version__,
            "rmse": self.rmse,
            "rmse_svd": self.rmse_svd,
            "rmse_sc": self.rmse_sc,
            "d_sc": self.d_sc,
            "params": self.params.model_dump(),
            "quality": self.quality.model_dump(),
            "k": self.k,
            "seed": self.params.seed,
            "n_pert": self.n_pert,
            "n_val": self.n_val,
            "n_remove": self.n_remove,
            "n_add": self.n_add,
            "clamped_count": self.clamped_count,
            "sigma": [float(s) for s in self.sigma],
            "delta_sigma": [float(d) for d in self.delta_sigma],
        }
        if self.elapsed_seconds is not None:
            payload["elapsed_seconds"] = self.elapsed_seconds
        payload.update(self.extra)
        return payload


def gramian_diagonal(original: MatrixLike, perturbed: MatrixLike, v: np.ndarray) -> np.ndarray:
    """
    Diag(V^T (M^T M - M^P^T M^P) V) as column-wise ||M v_r||^2 - ||M^P v_r||^2
    """
    mv = project_columns(original, v)
    mpv = project_columns(perturbed, v)
    return np.einsum("ij,ij->j", mv - mpv, mv + mpv)


def delta_sigma(original: SparseMatrix, perturbed: SparseMatrix, factors: SvdFactors) -> DeltaSigma:
    """
    First-order singular-value correction

    Diag(d(Sigma^T Sigma)) is taken as the column-wise difference of squared
    norms of M V and M^P V, so no m x m Gramian is ever formed. Then
    dSigma_ii = sqrt(max(0, Sigma_ii^2 + d_ii)) - Sigma_ii, and entries with
    d_ii == 0 are exactly 0.

    Args:
        original: M
        perturbed: M^P
        factors: Truncated SVD of M^P

    Returns:
        DeltaSigma with the number of clamped square-root arguments
    """
    if original.shape != perturbed.shape:
        raise InvalidArgumentError(f"shape mismatch: {original.shape} vs {perturbed.shape}")
    if factors.shape != perturbed.shape:
        raise InvalidArgumentError(f"factors of shape {factors.shape} do not match matrix {perturbed.shape}")

    gram_diag = gramian_diagonal(original, perturbed, factors.v)

    sigma = factors.sigma
    argument = sigma * sigma + gram_diag
    clamped = argument < 0
    values = np.sqrt(np.maximum(argument, 0.0)) - sigma
    values[gram_diag == 0] = 0.0

    clamped_count = int(clamped.sum())
    if clamped_count:
        log.warning_event("delta_sigma_clamped", {"count": clamped_count, "k": factors.k})
    return DeltaSigma(values, clamped_count)


def predict_entries(
    factors: SvdFactors,
    correction: DeltaSigma,
    positions: EntrySet,
    chunk_size: int = PREDICT_CHUNK
) -> np.ndarray:
    """
    Evaluate sum_r U_ir (Sigma_rr + dSigma_rr) V_jr at each position

    Args:
        factors: Factors of M^P
        correction: dSigma (DeltaSigma.zeros gives the plain rank-k reconstruction)
        positions: Cells to evaluate
        chunk_size: Positions per block

    Returns:
        One prediction per position
    """
    if correction.k != factors.k:
        raise InvalidArgumentError(f"correction has length {correction.k}, factors have rank {factors.k}")
    n, m = factors.shape
    rows, cols = positions.rows, positions.cols
    if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise InvalidArgumentError("position out of bounds")

    scaled = factors.sigma + correction.values
    out = np.empty(len(rows))
    for start in range(0, len(rows), chunk_size):
        stop = start + chunk_size
        out[start:stop] = ((factors.u[rows[start:stop]] * scaled) * factors.v[cols[start:stop]]).sum(axis=1)
    return out


def rmse_on(original: SparseMatrix, predictions: np.ndarray, positions: EntrySet) -> float:
    """
    Root mean squared error against M

    Cells outside the observed set count as 0. Squared residuals are summed with
    math.fsum.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    if len(positions) == 0:
        raise InvalidArgumentError("RMSE over an empty position set is undefined")
    if len(predictions) != len(positions):
        raise InvalidArgumentError(f"{len(predictions)} predictions for {len(positions)} positions")
    residuals = original.values_at(positions) - predictions
    return math.sqrt(math.fsum(residuals * residuals) / len(residuals))


def spectral_distance(correction: DeltaSigma, k: int) -> float:
    """Mean absolute singular-value correction (1/k) sum |dSigma_ii|"""
    if k < 1 or correction.k != k:
        raise InvalidArgumentError(f"correction of length {correction.k} does not match k={k}")
    return math.fsum(np.abs(correction.values)) / k


def evaluate_plan(
    matrix: SparseMatrix,
    plan: PerturbationPlan,
    k: int,
    quality: SvdQuality
) -> PlanEvaluation:
    """
    Perturb, factor M^P, correct and predict on the perturbed positions
    """
    perturbed = apply_perturbation(matrix, plan)
    factors = truncated_svd(perturbed, k, quality)
    correction = delta_sigma(matrix, perturbed, factors)
    positions = plan.omega_pert
    return PlanEvaluation(
        perturbed=perturbed,
        factors=factors,
        correction=correction,
        positions=positions,
        predictions=predict_entries(factors, correction, positions),
        truth=matrix.values_at(positions),
    )


def complexity_report(
    matrix: SparseMatrix,
    params: PerturbationParams,
    k: int,
    quality: SvdQuality = SvdQuality(),
    baseline: Optional[SvdFactors] = None,
    plan: Optional[PerturbationPlan] = None,
    timing: bool = False
) -> ComplexityReport:
    """
    Run the full structural-consistency pipeline on one matrix

    The baseline is the rank-k truncated SVD of the unperturbed matrix, scored
    on the same perturbed positions.

    Args:
        matrix: M
        params: Perturbation settings
        k: Rank
        quality: SVD settings, shared by the perturbed and baseline factorizations
        baseline: Precomputed truncated SVD of M (reused across sweeps)
        plan: Precomputed plan (drawn from params when omitted)
        timing: Record elapsed_seconds

    Returns:
        ComplexityReport

    Raises:
        RatioUndefinedError: Baseline error is 0; the partial report is attached
    """
    started = time.perf_counter()
    plan = plan or select_perturbation_sets(matrix, params)
    evaluation = evaluate_plan(matrix, plan, k, quality)

    rmse = rmse_on(matrix, evaluation.predictions, evaluation.positions)
    if baseline is None:
        baseline = truncated_svd(matrix, k, quality)
    baseline_predictions = predict_entries(baseline, DeltaSigma.zeros(k), evaluation.positions)
    rmse_svd = rmse_on(matrix, baseline_predictions, evaluation.positions)

    report = ComplexityReport(
        rmse=rmse,
        rmse_svd=rmse_svd,
        rmse_sc=rmse / rmse_svd if rmse_svd > 0 else None,
        d_sc=spectral_distance(evaluation.correction, k),
        params=params,
        quality=quality,
        k=k,
        n_pert=plan.n_pert,
        n_val=len(plan.omega_val),
        n_remove=len(plan.omega_remove),
        n_add=len(plan.omega_add),
        clamped_count=evaluation.correction.clamped_count,
        sigma=evaluation.factors.sigma,
        delta_sigma=evaluation.correction.values,
        elapsed_seconds=time.perf_counter() - started if timing else None,
    )

    log.info_event("complexity_report", {
        "p": params.p, "alpha": params.alpha, "k": k,
        "rmse": rmse, "rmse_svd": rmse_svd, "rmse_sc": report.rmse_sc, "d_sc": report.d_sc,
    })
    if report.rmse_sc is None:
        raise RatioUndefinedError(
            f"baseline RMSE is 0 on {plan.n_pert} perturbed positions; RMSE_SC is undefined (RMSE={rmse:.6g})",
            report=report,
        )
    return report
