"""
Structural Complexity Toolkit - Analysis Engine

Coordinates matrix loading, baseline factorization, perturbation sweeps and
per-rating scoring
"""

import hashlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from src.data.cache import matrix_to_bytes
from src.data.interactions import InteractionFormat, Source
from src.data.matrix import DedupPolicy, SparseMatrix
from src.data.provider import InteractionProvider
from src.spectral.metrics import ComplexityReport, complexity_report
from src.spectral.perturbation import PerturbationParams, PerturbationPlan
from src.spectral.scorer import ScoreTable, score_ratings
from src.spectral.svd import SvdFactors, SvdQuality, truncated_svd
from src.utils import logging as log
from src.utils import serialization
from src.utils.config import get_settings, resolve_threads, thread_limits
from src.utils.errors import CacheFormatError


class ComplexityAnalyzer:
    """
    ComplexityAnalyzer runs the structural-consistency pipeline over one or more
    matrices, reusing the baseline factorization of each matrix across a grid
    of perturbation settings.
    """

    def __init__(
        self,
        k: int = 50,
        quality: SvdQuality = SvdQuality(),
        cache_dir: Optional[Union[str, Path]] = None,
        threads: Optional[int] = None,
    ):
        """
        Initialize the analyzer

        Args:
            k: Rank of every truncated SVD
            quality: SVD settings
            cache_dir: Directory for SCM1/SCF1 caches (defaults to SC_CACHE_DIR)
            threads: BLAS and worker thread count (defaults to SC_THREADS)
        """
        self.k = k
        self.quality = quality
        self.cache_dir = Path(cache_dir) if cache_dir else get_settings().cache_dir
        self.threads = resolve_threads(threads)

        self.provider = InteractionProvider(self.cache_dir)

        # Baseline key -> factors of the unperturbed matrix
        self.baselines: Dict[str, SvdFactors] = {}

        log.debug(f"ComplexityAnalyzer initialized with k={k}, threads={self.threads}")

    def load(
        self,
        source: Source,
        fmt: Optional[InteractionFormat] = None,
        dedup: DedupPolicy = DedupPolicy.KEEP_LAST_BY_TIMESTAMP
    ) -> SparseMatrix:
        return self.provider.get_matrix(source, fmt, dedup)

    def _baseline_key(self, matrix: SparseMatrix) -> str:
        digest = hashlib.sha256(matrix_to_bytes(matrix))
        digest.update(serialization.dumps({"k": self.k, "quality": self.quality}))
        return digest.hexdigest()

    def baseline_factors(self, matrix: SparseMatrix) -> SvdFactors:
        """
        Truncated SVD of the unperturbed matrix, computed once per (matrix, k, quality)
        """
        key = self._baseline_key(matrix)
        if key in self.baselines:
            return self.baselines[key]

        path = self.cache_dir / f"factors_{key[:32]}.scf" if self.cache_dir else None
        factors = None
        if path is not None and path.exists():
            try:
                factors = SvdFactors.load(path)
                log.info_event("cache_hit", {"key": key[:16], "tier": "disk", "path": str(path)})
            except CacheFormatError as e:
                log.warning_event("cache_invalid", {"path": str(path), "reason": str(e)})

        if factors is None:
            with thread_limits(self.threads):
                factors = truncated_svd(matrix, self.k, self.quality)
            if path is not None:
                factors.save(path)
                log.info_event("cache_write", {"key": key[:16], "path": str(path)})

        self.baselines[key] = factors
        return factors

    def analyze(
        self,
        matrix: SparseMatrix,
        params: PerturbationParams,
        plan: Optional[PerturbationPlan] = None,
        timing: bool = False
    ) -> ComplexityReport:
        """
        Complexity report for one perturbation setting

        Args:
            matrix: Matrix to analyze
            params: Perturbation settings
            plan: Fixed plan to evaluate instead of drawing one from params
            timing: Record elapsed time in the report

        Returns:
            ComplexityReport
        """
        baseline = self.baseline_factors(matrix)
        with thread_limits(self.threads):
            return complexity_report(matrix, params, self.k, self.quality, baseline=baseline, plan=plan, timing=timing)

    def sweep(
        self,
        matrix: SparseMatrix,
        ps: Sequence[float],
        alphas: Sequence[float],
        base: PerturbationParams = PerturbationParams(),
        timing: bool = False
    ) -> List[ComplexityReport]:
        """
        Reports for every (p, alpha) pair, p-major

        Args:
            matrix: Matrix to analyze
            ps: Perturbation fractions
            alphas: Value-shuffle shares
            base: Settings shared by every grid point (seed, time weighting, epsilon)
            timing: Record elapsed time in each report

        Returns:
            len(ps) * len(alphas) reports
        """
        grid = [base.model_copy(update={"p": p, "alpha": alpha}) for p in ps for alpha in alphas]
        # model_copy skips validation; rebuilding enforces the bounds on every grid point
        grid = [PerturbationParams(**params.model_dump()) for params in grid]
        log.info(f"Running sweep over {len(grid)} settings")
        return [self.analyze(matrix, params, timing=timing) for params in grid]

    def score(self, matrix: SparseMatrix, params: PerturbationParams, n_folds: int = 10) -> ScoreTable:
        """Per-rating perturbation scores over n_folds folds"""
        with thread_limits(self.threads):
            return score_ratings(matrix, n_folds, params, self.k, self.quality, threads=self.threads)
