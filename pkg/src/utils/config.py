"""
Structural Complexity Toolkit - Configuration

Environment-driven settings (SC_* variables, optionally from a .env file) and
thread-count control for BLAS and worker pools.
"""

from contextlib import contextmanager
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from threadpoolctl import threadpool_limits


class Settings(BaseSettings):
    """
    Process-wide defaults, read from SC_* environment variables
    """

    model_config = SettingsConfigDict(env_prefix="SC_", env_file=".env", extra="ignore")

    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    log_file: Optional[Path] = None
    structured_logs: bool = True
    cache_dir: Optional[Path] = None


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings are read once per process"""
    return Settings()


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Resolve an explicit thread count against the SC_THREADS default

    Args:
        threads: Explicit count, or None to use the environment default

    Returns:
        Thread count >= 1
    """
    if threads is None:
        return get_settings().threads
    return max(1, int(threads))


@contextmanager
def thread_limits(threads: Optional[int] = None) -> Iterator[int]:
    """
    Limit BLAS/OpenMP pools to the resolved thread count for the duration

    Yields:
        The resolved thread count
    """
    n_threads = resolve_threads(threads)
    with threadpool_limits(limits=n_threads):
        yield n_threads
