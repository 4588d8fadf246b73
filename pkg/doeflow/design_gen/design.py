from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from doeflow.spec_model.schema import DesignFamily

# "I" is reserved for the identity word of a defining relation.
FACTOR_LETTERS = "ABCDEFGHJKLMNOPQRSTUVWXYZ"


class Coding(str, Enum):
    """How the values of one design column are coded."""

    TWO_LEVEL_PM1 = "two_level_pm1"
    FIVE_LEVEL_CCD = "five_level_ccd"
    THREE_LEVEL_BB = "three_level_bb"
    UNIT_CUBE_01 = "unit_cube_01"
    CATEGORICAL_INDEX = "categorical_index"
    # L equally spaced points in [-1, +1], L > 2.
    LEVEL_GRID = "level_grid"


LEVEL_CODINGS = (
    Coding.TWO_LEVEL_PM1,
    Coding.FIVE_LEVEL_CCD,
    Coding.THREE_LEVEL_BB,
    Coding.LEVEL_GRID,
)


def default_factor_names(k: int) -> Tuple[str, ...]:
    if k <= len(FACTOR_LETTERS):
        return tuple(FACTOR_LETTERS[:k])
    return tuple(f"x{i + 1}" for i in range(k))


def level_grid(n_levels: int) -> np.ndarray:
    """`n_levels` equally spaced points from -1 to +1."""
    return np.linspace(-1.0, 1.0, n_levels)


@dataclass(frozen=True)
class DesignMetadata:
    generators: Tuple[str, ...] = ()
    resolution: Optional[int] = None
    defining_relation: Tuple[str, ...] = ()
    n_center: Optional[int] = None
    alpha: Optional[float] = None
    # Number of distinct levels per column for level-coded and categorical columns.
    levels: Optional[Tuple[int, ...]] = None
    seed: Optional[int] = None
    array_name: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "generators": list(self.generators),
            "resolution": self.resolution,
            "defining_relation": list(self.defining_relation),
            "n_center": self.n_center,
            "alpha": self.alpha,
            "levels": list(self.levels) if self.levels is not None else None,
            "seed": self.seed,
            "array_name": self.array_name,
        }


@dataclass(frozen=True, eq=False)
class Design:
    """A coded treatment matrix, one row per run and one column per factor, plus the structure
    it was generated from.

    # Parameters

    family : `DesignFamily`
    factor_names : `Tuple[str, ...]`
        Column names. Generators name factors by letter, so designs start out with letter names
        and are renamed to the spec's factors with `renamed`.
    matrix : `np.ndarray`
        `(n_runs, k)` coded values. Stored read-only.
    coding : `Tuple[Coding, ...]`
        One coding per column.
    metadata : `DesignMetadata`
    """

    family: DesignFamily
    factor_names: Tuple[str, ...]
    matrix: np.ndarray
    coding: Tuple[Coding, ...]
    metadata: DesignMetadata = field(default_factory=DesignMetadata)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError(f"Design matrix must be two-dimensional, got shape {matrix.shape}")
        if matrix.shape[1] != len(self.factor_names) or len(self.coding) != len(self.factor_names):
            raise ValueError(
                f"Design matrix has {matrix.shape[1]} columns, {len(self.factor_names)} factor "
                f"names and {len(self.coding)} codings"
            )
        if len(set(self.factor_names)) != len(self.factor_names):
            raise ValueError(f"Duplicate factor names in {self.factor_names}")
        for j, coding in enumerate(self.coding):
            column = matrix[:, j]
            if coding == Coding.TWO_LEVEL_PM1 and not np.all(np.abs(column) == 1.0):
                raise ValueError(f"Column {self.factor_names[j]} is not coded in {{-1, +1}}")
            if coding == Coding.UNIT_CUBE_01 and not np.all((column >= 0.0) & (column < 1.0)):
                raise ValueError(f"Column {self.factor_names[j]} is not in [0, 1)")
            if coding == Coding.CATEGORICAL_INDEX:
                n_levels = self.metadata.levels[j] if self.metadata.levels else None
                if not np.all(column == np.round(column)) or column.min() < 0 or (
                    n_levels is not None and column.max() >= n_levels
                ):
                    raise ValueError(
                        f"Column {self.factor_names[j]} must hold level indices in range"
                    )
        if all(coding in LEVEL_CODINGS for coding in self.coding):
            rows = [tuple(row) for row in matrix if np.any(row != 0.0)]
            if len(set(rows)) != len(rows):
                raise ValueError("Duplicate non-center rows in design matrix")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "factor_names", tuple(self.factor_names))
        object.__setattr__(self, "coding", tuple(Coding(c) for c in self.coding))

    @property
    def n_runs(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_two_level(self) -> bool:
        return all(coding == Coding.TWO_LEVEL_PM1 for coding in self.coding)

    def column(self, name: str) -> np.ndarray:
        return self.matrix[:, self.factor_names.index(name)]

    def renamed(self, names: Sequence[str]) -> "Design":
        if len(names) != self.k:
            raise ValueError(f"Expected {self.k} names, got {len(names)}")
        return replace(self, factor_names=tuple(names))

    def to_dict(self) -> Dict[str, Any]:
        """Metadata for the JSON sidecar; the matrix itself goes to CSV."""
        return {
            "family": self.family.value,
            "factor_names": list(self.factor_names),
            "coding": [coding.value for coding in self.coding],
            "n_runs": self.n_runs,
            **self.metadata.to_dict(),
        }

    def coded_rows(self) -> List[List[float]]:
        return self.matrix.tolist()
