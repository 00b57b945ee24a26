"""
Structural Complexity Toolkit - Rating Scorer

Per-interaction structural perturbation errors. The observed entries are split
into folds; each fold in turn is perturbed as a whole and every one of its
entries is scored by the absolute residual of the corrected predictor.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.data.cache import scores_from_bytes, scores_to_bytes
from src.data.interactions import TIMESTAMP_ABSENT
from src.data.matrix import EntrySet, SparseMatrix, partition_entries
from src.spectral.metrics import evaluate_plan, rmse_on
from src.spectral.perturbation import PerturbationParams, plan_for_entries
from src.spectral.svd import SvdQuality
from src.utils import logging as log
from src.utils import serialization
from src.utils.config import resolve_threads
from src.utils.errors import DataError, InvalidArgumentError

SCORE_COLUMNS = ["user_token", "item_token", "rating", "timestamp", "fold", "score"]


@dataclass(frozen=True)
class FoldSummary:
    fold: int
    n_scored: int
    n_added: int
    clamped_count: int
    rmse_scored: float
    rmse_pert: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fold": self.fold,
            "n_scored": self.n_scored,
            "n_added": self.n_added,
            "clamped_count": self.clamped_count,
            "rmse_scored": self.rmse_scored,
            "rmse_pert": self.rmse_pert,
        }


@dataclass(eq=False)
class ScoreTable:
    """
    Score and fold for every observed entry

    scores and folds are aligned with the matrix's CSR entry order.
    params, k and quality are None for tables read back from CSV without metadata.
    """

    matrix: SparseMatrix
    scores: np.ndarray
    folds: np.ndarray
    params: Optional[PerturbationParams] = None
    n_folds: Optional[int] = None
    k: Optional[int] = None
    quality: Optional[SvdQuality] = None
    summaries: List[FoldSummary] = field(default_factory=list)

    def __post_init__(self):
        if len(self.scores) != self.matrix.nnz or len(self.folds) != self.matrix.nnz:
            raise InvalidArgumentError("scores and folds must cover every matrix entry")

    def __len__(self) -> int:
        return len(self.scores)

    def scores_at(self, positions: EntrySet) -> np.ndarray:
        found, index = self.matrix.locate(positions.rows, positions.cols)
        if not found.all():
            raise InvalidArgumentError("positions outside the scored entries")
        return self.scores[index]

    def metadata(self) -> Dict[str, Any]:
        return {
            "params": self.params.model_dump() if self.params else None,
            "n_folds": self.n_folds,
            "k": self.k,
            "quality": self.quality.model_dump() if self.quality else None,
            "folds": [summary.to_dict() for summary in self.summaries],
        }

    def to_frame(self) -> pd.DataFrame:
        m = self.matrix
        timestamps = m.timestamps
        return pd.DataFrame(
            {
                "user_token": m.user_tokens[m.rows],
                "item_token": m.item_tokens[m.cols],
                "rating": m.values,
                "timestamp": np.where(timestamps == TIMESTAMP_ABSENT, "", timestamps.astype(str)),
                "fold": self.folds,
                "score": self.scores,
            }
        )

    def to_csv(self, sink: Union[str, Path, TextIO]) -> None:
        if isinstance(sink, (str, Path)):
            Path(sink).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(sink, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, source: Union[str, Path, TextIO], metadata: Optional[Dict[str, Any]] = None) -> "ScoreTable":
        """
        Rebuild matrix and scores from a score CSV

        Args:
            source: CSV written by to_csv
            metadata: Optional params / n_folds / k / quality, as produced by metadata()
        """
        frame = pd.read_csv(source, dtype={"user_token": str, "item_token": str, "timestamp": str},
                            keep_default_na=False)
        missing = [col for col in SCORE_COLUMNS if col not in frame.columns]
        if missing:
            raise DataError(f"score file lacks columns {missing}")
        if frame.empty:
            raise DataError("score file has no rows")

        rows, user_tokens = pd.factorize(frame["user_token"], sort=False)
        cols, item_tokens = pd.factorize(frame["item_token"], sort=False)
        ts_raw = frame["timestamp"].str.strip()
        timestamps = np.where(ts_raw == "", str(TIMESTAMP_ABSENT), ts_raw).astype(np.int64)

        matrix = SparseMatrix.from_entries(
            rows, cols, frame["rating"].to_numpy(dtype=np.float64), timestamps,
            np.asarray(user_tokens, dtype=object), np.asarray(item_tokens, dtype=object),
        )
        order = np.lexsort((cols, rows))
        return cls._with_metadata(
            matrix,
            frame["score"].to_numpy(dtype=np.float64)[order],
            frame["fold"].to_numpy(dtype=np.int64)[order],
            metadata or {},
        )

    @classmethod
    def _with_metadata(cls, matrix, scores, folds, metadata: Dict[str, Any]) -> "ScoreTable":
        return cls(
            matrix=matrix,
            scores=scores,
            folds=folds,
            params=PerturbationParams(**metadata["params"]) if metadata.get("params") else None,
            n_folds=metadata.get("n_folds"),
            k=metadata.get("k"),
            quality=SvdQuality(**metadata["quality"]) if metadata.get("quality") else None,
            summaries=[FoldSummary(**summary) for summary in metadata.get("folds") or []],
        )

    def save(self, path: Union[str, Path]) -> Path:
        """Write as SCS1"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(scores_to_bytes(self.matrix, self.scores, self.folds, serialization.dumps(self.metadata())))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScoreTable":
        matrix, scores, folds, params_json = scores_from_bytes(Path(path).read_bytes())
        return cls._with_metadata(matrix, scores, folds, serialization.loads(params_json))


def fold_rng(seed: int, fold: int) -> np.random.Generator:
    """Independent generator per fold, so each fold can be recomputed alone"""
    return np.random.default_rng(np.random.SeedSequence([seed, fold]))


def score_fold(
    matrix: SparseMatrix,
    fold_entries: EntrySet,
    fold: int,
    params: PerturbationParams,
    k: int,
    quality: SvdQuality
) -> Dict[str, Any]:
    """
    Perturb one fold and score its entries

    Returns:
        Dictionary with the CSR indices of the scored entries, their scores and
        the fold summary
    """
    plan = plan_for_entries(matrix, fold_entries, params, fold_rng(params.seed, fold))
    evaluation = evaluate_plan(matrix, plan, k, quality)

    n_scored = len(plan.omega_val) + len(plan.omega_remove)
    residuals = np.abs(evaluation.residuals[:n_scored])
    scored = EntrySet.union([plan.omega_val, plan.omega_remove], fold_entries.kind)
    _, index = matrix.locate(scored.rows, scored.cols)

    summary = FoldSummary(
        fold=fold,
        n_scored=n_scored,
        n_added=len(plan.omega_add),
        clamped_count=evaluation.correction.clamped_count,
        rmse_scored=math.sqrt(math.fsum(residuals * residuals) / n_scored),
        rmse_pert=rmse_on(matrix, evaluation.predictions, evaluation.positions),
    )
    log.info_event("fold_scored", summary.to_dict())
    return {"index": index, "scores": residuals, "summary": summary}


def score_ratings(
    matrix: SparseMatrix,
    n_folds: int = 10,
    params: PerturbationParams = PerturbationParams(),
    k: int = 50,
    quality: SvdQuality = SvdQuality(),
    threads: Optional[int] = None
) -> ScoreTable:
    """
    Score every observed entry with the fold-wise perturbation procedure

    Within each fold floor(alpha * |fold|) entries are value-shuffled and the
    rest relocated to empty cells. Folds run in parallel; each has its own
    generator derived from (params.seed, fold), so results do not depend on the
    worker count.

    Args:
        matrix: Matrix to score
        n_folds: Number of disjoint folds (>= 2)
        params: alpha, time weighting and seed (p is not used)
        k: Rank of the truncated SVD
        quality: SVD settings
        threads: Worker count (defaults to SC_THREADS)

    Returns:
        ScoreTable covering every observed entry
    """
    folds = partition_entries(matrix, n_folds, params.seed)
    n_jobs = resolve_threads(threads)

    results = Parallel(n_jobs=n_jobs)(
        delayed(score_fold)(matrix, entries, fold, params, k, quality)
        for fold, entries in enumerate(folds)
    )

    scores = np.full(matrix.nnz, np.nan)
    fold_of = np.full(matrix.nnz, -1, dtype=np.int64)
    for fold, result in enumerate(results):
        scores[result["index"]] = result["scores"]
        fold_of[result["index"]] = fold

    if np.isnan(scores).any():
        raise DataError("some entries were not scored")

    return ScoreTable(
        matrix=matrix,
        scores=scores,
        folds=fold_of,
        params=params,
        n_folds=n_folds,
        k=k,
        quality=quality,
        summaries=[result["summary"] for result in results],
    )
