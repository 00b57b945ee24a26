"""
Shared fixtures
"""

from pathlib import Path

import numpy as np
import pytest

from src.utils import logging as log
from tests.factories import random_matrix

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def quiet_logging():
    log.setup_logging(console=False, log_level="WARNING")
    yield


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def toy_csv() -> bytes:
    return b"u1,i1,5,100\nu1,i2,3,200\nu2,i1,4,150\n"


@pytest.fixture
def small_matrix():
    return random_matrix(seed=7)


@pytest.fixture
def ratings_csv(tmp_path) -> Path:
    """40 users x 30 items, about 40% dense, with timestamps"""
    rng = np.random.default_rng(11)
    lines = []
    for user in range(40):
        items = rng.choice(30, size=int(rng.integers(8, 16)), replace=False)
        for item in items:
            lines.append(f"u{user},i{item},{int(rng.integers(1, 6))},{int(rng.integers(1_000, 100_000))}")
    path = tmp_path / "ratings.csv"
    path.write_text("\n".join(lines) + "\n")
    return path
