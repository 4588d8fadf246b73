"""
Modern, simulation-oriented designs: space-filling samples of the unit cube and the standard
orthogonal arrays.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from doeflow.common.checks import DesignError, DimensionUnsupported, UnknownArray
from doeflow.common.util import numpy_generator
from doeflow.design_gen.design import (
    Coding,
    Design,
    DesignMetadata,
    default_factor_names,
    level_grid,
)
from doeflow.spec_model.schema import DesignFamily

SOBOL_BITS = 32

# Direction numbers for dimensions 2 to 16, from the Joe and Kuo table (new-joe-kuo-6.21201):
# (degree s of the primitive polynomial, its coefficient bits a, initial odd integers m_1..m_s).
# Dimension 1 uses m_i = 1 for every bit.
SOBOL_DIRECTION_TABLE: List[Tuple[int, int, Tuple[int, ...]]] = [
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
    (5, 11, (1, 1, 5, 1, 1)),
    (5, 13, (1, 1, 1, 3, 11)),
    (5, 14, (1, 3, 5, 5, 31)),
    (6, 1, (1, 3, 3, 9, 7, 49)),
    (6, 13, (1, 1, 1, 15, 21, 21)),
    (6, 16, (1, 3, 1, 13, 27, 49)),
]
SOBOL_MAX_DIMENSION = len(SOBOL_DIRECTION_TABLE) + 1

# Standard orthogonal arrays, levels numbered from 1.
ORTHOGONAL_ARRAYS: Dict[str, List[str]] = {
    "L4": ["111", "122", "212", "221"],
    "L8": [
        "1111111",
        "1112222",
        "1221122",
        "1222211",
        "2121212",
        "2122121",
        "2211221",
        "2212112",
    ],
    "L9": ["1111", "1222", "1333", "2123", "2231", "2312", "3132", "3213", "3321"],
}


def _unit_cube_design(
    family: DesignFamily, matrix: np.ndarray, seed: Optional[int] = None
) -> Design:
    k = matrix.shape[1]
    return Design(
        family=family,
        factor_names=default_factor_names(k),
        matrix=matrix,
        coding=(Coding.UNIT_CUBE_01,) * k,
        metadata=DesignMetadata(seed=seed),
    )


def latin_hypercube(k: int, n: int, seed: int) -> Design:
    """`n` points in `[0, 1)^k` such that every column has exactly one point in each stratum
    `[i/n, (i+1)/n)`, placed uniformly within it."""
    if k < 1:
        raise DesignError(f"Latin hypercubes need at least 1 factor, got {k}")
    if n < 2:
        raise DesignError(f"Latin hypercubes need at least 2 samples, got {n}")
    rng = numpy_generator(seed)
    columns = []
    for _ in range(k):
        strata = rng.permutation(n)
        column = (strata + rng.random(n)) / n
        # Rounding can push a point onto the upper edge of its stratum.
        off = np.floor(column * n) != strata
        column[off] = (strata[off] + 0.5) / n
        columns.append(column)
    return _unit_cube_design(DesignFamily.LATIN_HYPERCUBE, np.column_stack(columns), seed)


def sobol_direction_numbers(dimension: int) -> List[int]:
    """The `SOBOL_BITS` direction integers of a dimension (1-based), scaled to 32 bits."""
    if dimension == 1:
        return [1 << (SOBOL_BITS - 1 - i) for i in range(SOBOL_BITS)]
    s, a, m = SOBOL_DIRECTION_TABLE[dimension - 2]
    v = [m[i] << (SOBOL_BITS - 1 - i) for i in range(s)]
    for i in range(s, SOBOL_BITS):
        value = v[i - s] ^ (v[i - s] >> s)
        for j in range(1, s):
            if (a >> (s - 1 - j)) & 1:
                value ^= v[i - j]
        v.append(value)
    return v


def _lowest_zero_bit(i: int) -> int:
    c = 0
    while i & 1:
        i >>= 1
        c += 1
    return c


def sobol(k: int, n: int) -> Design:
    """Points 1 to `n` of the Sobol sequence in Gray-code order. The origin (point 0) is skipped,
    so the first point is 0.5 in every coordinate."""
    if k < 1 or n < 1:
        raise DesignError(f"Sobol designs need k >= 1 and n >= 1, got k={k}, n={n}")
    if k > SOBOL_MAX_DIMENSION:
        raise DimensionUnsupported(
            f"The built-in direction numbers cover {SOBOL_MAX_DIMENSION} dimensions, got {k}"
        )
    if n >= 1 << SOBOL_BITS:
        raise DesignError(f"At most {(1 << SOBOL_BITS) - 1} Sobol points are supported")
    directions = [sobol_direction_numbers(d + 1) for d in range(k)]
    state = [0] * k
    points = np.empty((n, k))
    scale = 1.0 / (1 << SOBOL_BITS)
    for index in range(n):
        c = _lowest_zero_bit(index)
        for d in range(k):
            state[d] ^= directions[d][c]
            points[index, d] = state[d] * scale
    return _unit_cube_design(DesignFamily.SOBOL, points)


def monte_carlo(k: int, n: int, seed: int) -> Design:
    """`n` independent uniform points in `[0, 1)^k`."""
    if k < 1 or n < 1:
        raise DesignError(f"Monte Carlo designs need k >= 1 and n >= 1, got k={k}, n={n}")
    matrix = numpy_generator(seed).random((n, k))
    return _unit_cube_design(DesignFamily.MONTE_CARLO, matrix, seed)


def orthogonal_array(name: str) -> Design:
    """One of the standard arrays L4 (4 runs, 3 two-level columns), L8 (8 runs, 7 two-level
    columns) or L9 (9 runs, 4 three-level columns). Two-level columns are coded -1/+1 and
    three-level columns -1/0/+1."""
    key = str(name).upper()
    if key not in ORTHOGONAL_ARRAYS:
        raise UnknownArray(
            f"Unknown orthogonal array {name!r}, expected one of {sorted(ORTHOGONAL_ARRAYS)}"
        )
    levels = np.array([[int(c) for c in row] for row in ORTHOGONAL_ARRAYS[key]]) - 1
    n_levels = int(levels.max()) + 1
    matrix = level_grid(n_levels)[levels]
    k = matrix.shape[1]
    coding = Coding.TWO_LEVEL_PM1 if n_levels == 2 else Coding.LEVEL_GRID
    return Design(
        family=DesignFamily.ORTHOGONAL_ARRAY,
        factor_names=default_factor_names(k),
        matrix=matrix,
        coding=(coding,) * k,
        metadata=DesignMetadata(levels=(n_levels,) * k, array_name=key),
    )
