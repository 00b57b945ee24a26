"""
Structural Complexity Toolkit - Data Provider

Loads interaction logs into sparse matrices, with in-memory and on-disk caching
"""

import hashlib
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Union

from src.data.cache import load_matrix, save_matrix
from src.data.interactions import InteractionFormat, Source, load_interactions
from src.data.matrix import DedupPolicy, SparseMatrix, build_matrix
from src.utils import logging as log
from src.utils.errors import CacheFormatError


class InteractionProvider:
    """
    Provider for interaction matrices used by the analysis pipeline

    Handles parsing, deduplication and caching. Cache entries are keyed by the
    SHA-256 of the input bytes together with the file format and dedup policy,
    so an edited input never hits a stale entry.
    """

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        """
        Initialize the data provider

        Args:
            cache_dir: Directory for SCM1 matrix caches (None keeps caching in memory only)
        """
        self.cache_dir = Path(cache_dir) if cache_dir else None

        # Cache key -> matrix
        self.cache: Dict[str, SparseMatrix] = {}

        self.stats = {
            "requests": 0,
            "cache_hits": 0,
            "disk_hits": 0,
            "failed_requests": 0,
            "last_request_time": None
        }

    @staticmethod
    def cache_key(raw: bytes, fmt: InteractionFormat, dedup: DedupPolicy) -> str:
        digest = hashlib.sha256(raw)
        digest.update(repr((fmt, DedupPolicy(dedup).value)).encode("utf-8"))
        return digest.hexdigest()

    def get_matrix(
        self,
        source: Source,
        fmt: Optional[InteractionFormat] = None,
        dedup: DedupPolicy = DedupPolicy.KEEP_LAST_BY_TIMESTAMP,
        use_cache: bool = True
    ) -> SparseMatrix:
        """
        Load an interaction log and build its matrix

        Args:
            source: Raw bytes, a file path, or a binary stream
            fmt: Delimiter, header flag and column mapping
            dedup: Collision policy for repeated (user, item) pairs
            use_cache: Whether to use cached matrices if available

        Returns:
            SparseMatrix for the log
        """
        self.stats["requests"] += 1
        self.stats["last_request_time"] = datetime.now()
        fmt = fmt or InteractionFormat()

        raw = source if isinstance(source, bytes) else (
            Path(source).read_bytes() if isinstance(source, (str, Path)) else source.read()
        )
        key = self.cache_key(raw, fmt, dedup)

        if use_cache:
            matrix = self._lookup(key)
            if matrix is not None:
                return matrix

        try:
            matrix = build_matrix(load_interactions(raw, fmt), dedup)
        except Exception:
            self.stats["failed_requests"] += 1
            raise

        if use_cache:
            self._store(key, matrix)
        return matrix

    def _cache_path(self, key: str) -> Optional[Path]:
        return self.cache_dir / f"matrix_{key[:32]}.scm" if self.cache_dir else None

    def _lookup(self, key: str) -> Optional[SparseMatrix]:
        if key in self.cache:
            self.stats["cache_hits"] += 1
            log.debug_event("cache_hit", {"key": key[:16], "tier": "memory"})
            return self.cache[key]

        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            matrix = load_matrix(path)
        except CacheFormatError as e:
            # Unreadable cache files are rebuilt from the source
            log.warning_event("cache_invalid", {"path": str(path), "reason": str(e)})
            return None

        self.cache[key] = matrix
        self.stats["cache_hits"] += 1
        self.stats["disk_hits"] += 1
        log.info_event("cache_hit", {"key": key[:16], "tier": "disk", "path": str(path)})
        return matrix

    def _store(self, key: str, matrix: SparseMatrix):
        self.cache[key] = matrix
        path = self._cache_path(key)
        if path is not None:
            save_matrix(matrix, path)
            log.info_event("cache_write", {"key": key[:16], "path": str(path), "nnz": matrix.nnz})

    def get_cache_stats(self) -> Dict:
        """
        Get statistics about the cache

        Returns:
            Dictionary with cache statistics
        """
        return {
            "cache_size": len(self.cache),
            "cache_hits": self.stats["cache_hits"],
            "disk_hits": self.stats["disk_hits"],
            "requests": self.stats["requests"],
            "hit_ratio": self.stats["cache_hits"] / max(1, self.stats["requests"]),
            "failed_requests": self.stats["failed_requests"],
            "last_request_time": self.stats["last_request_time"].isoformat() if self.stats["last_request_time"] else None
        }

    def clear_cache(self):
        """Clear the in-memory cache (disk files are kept)"""
        self.cache.clear()
