"""
Structural Complexity Toolkit - Selection Strategies

Base class and the four per-user ordering strategies for training-subset
selection
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Dict, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.data.matrix import SparseMatrix
from src.utils import logging as log
from src.utils.errors import UnsupportedOperationError


class StrategyName(str, Enum):
    SC_LOW = "sc_low"
    SC_HIGH = "sc_high"
    RANDOM = "random"
    TEMPORAL = "temporal"


class SelectionSpec(BaseModel):
    """
    Subset request: strategy, sampling rate in (0, 1], seed for the random
    strategy and whether every user must be represented
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: StrategyName
    rate: float = Field(gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    stratified: bool = True


class SelectionStrategy(ABC):
    """
    Abstract base class for selection strategies

    A strategy assigns every entry a priority key; within a user, entries with
    smaller keys are kept first.
    """

    requires_timestamps = False

    def __init__(self, name: str):
        """
        Initialize a strategy

        Args:
            name: Strategy name for identification
        """
        self.name = name
        log.debug(f"Initializing selection strategy: {self.name}")

    @abstractmethod
    def priority(self, matrix: SparseMatrix, scores: np.ndarray, spec: SelectionSpec) -> np.ndarray:
        """
        Priority key per entry

        Args:
            matrix: Matrix being subset (entries in CSR order)
            scores: Perturbation score per entry, aligned with matrix entries
            spec: Selection request

        Returns:
            Array of keys, smaller means kept earlier
        """
        pass

    def check(self, matrix: SparseMatrix):
        if self.requires_timestamps and not matrix.has_timestamps:
            raise UnsupportedOperationError(f"strategy {self.name} requires timestamps on every entry")

    def __str__(self) -> str:
        return f"SelectionStrategy({self.name})"

    def __repr__(self) -> str:
        return self.__str__()


class SCLowStrategy(SelectionStrategy):
    """Keeps the entries with the smallest perturbation error"""

    def __init__(self):
        super().__init__(StrategyName.SC_LOW.value)

    def priority(self, matrix, scores, spec):
        return np.asarray(scores, dtype=np.float64)


class SCHighStrategy(SelectionStrategy):
    """Keeps the entries with the largest perturbation error"""

    def __init__(self):
        super().__init__(StrategyName.SC_HIGH.value)

    def priority(self, matrix, scores, spec):
        return -np.asarray(scores, dtype=np.float64)


class RandomStrategy(SelectionStrategy):
    """
    Seeded uniform order

    Keys are drawn once per entry from spec.seed, so a larger rate keeps a
    superset of a smaller one.
    """

    def __init__(self):
        super().__init__(StrategyName.RANDOM.value)

    def priority(self, matrix, scores, spec):
        return np.random.default_rng(spec.seed).random(matrix.nnz)


class TemporalStrategy(SelectionStrategy):
    """Keeps each user's most recent entries"""

    requires_timestamps = True

    def __init__(self):
        super().__init__(StrategyName.TEMPORAL.value)

    def priority(self, matrix, scores, spec):
        # Bitwise not reverses int64 order without overflow
        return ~matrix.timestamps


STRATEGIES: Dict[StrategyName, Type[SelectionStrategy]] = {
    StrategyName.SC_LOW: SCLowStrategy,
    StrategyName.SC_HIGH: SCHighStrategy,
    StrategyName.RANDOM: RandomStrategy,
    StrategyName.TEMPORAL: TemporalStrategy,
}


def get_strategy(name: StrategyName) -> SelectionStrategy:
    return STRATEGIES[StrategyName(name)]()
