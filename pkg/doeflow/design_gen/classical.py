"""
Classical designs: two-level and response-surface constructions built for small treatment
budgets. All columns are in coded units, -1/+1 at the factorial points.
"""
import itertools
import logging
import re
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from doeflow.common.checks import (
    DegenerateDesign,
    DesignError,
    InvalidAlpha,
    InvalidGenerator,
    KTooSmall,
    TooManyFactors,
    TooManyRuns,
)
from doeflow.design_gen.aliasing import IDENTITY, Word, defining_relation, word_product
from doeflow.design_gen.design import (
    FACTOR_LETTERS,
    Coding,
    Design,
    DesignMetadata,
    default_factor_names,
    level_grid,
)
from doeflow.spec_model.schema import DesignFamily

logger = logging.getLogger(__name__)

MAX_RUNS = 10 ** 6
MAX_FULL_FACTORIAL_FACTORS = 16
FRACTIONAL_LETTERS = FACTOR_LETTERS[:15]

# First rows of the cyclic Plackett-Burman constructions. The remaining rows are cyclic shifts
# of the first, and a final row of all minus signs completes the design.
PLACKETT_BURMAN_FIRST_ROWS = {
    12: "++-+++---+-",
    20: "++--++++-+-+----++-",
    24: "+++++-+-++--++--+-+----",
}
PLACKETT_BURMAN_SIZES = (4, 8, 12, 16, 20, 24)


class AlphaMode(str, Enum):
    ROTATABLE = "rotatable"
    FACE_CENTERED = "face_centered"
    CUSTOM = "custom"


def _yates_indices(levels: Sequence[int]) -> np.ndarray:
    """Every level combination in standard (Yates) order: the first factor changes fastest."""
    combos = itertools.product(*[range(n) for n in reversed(levels)])
    return np.array([combo[::-1] for combo in combos], dtype=int).reshape(-1, len(levels))


def _two_level_cube(k: int) -> np.ndarray:
    return np.where(_yates_indices([2] * k) == 0, -1.0, 1.0)


def full_factorial(levels_per_factor: Sequence[int]) -> Design:
    """Every combination of the given level counts, in standard order. Two-level columns are
    coded -1/+1, columns with more levels as equally spaced points from -1 to +1."""
    levels = [int(n) for n in levels_per_factor]
    if not levels:
        raise DesignError("A full factorial needs at least one factor")
    if any(n < 2 for n in levels):
        raise DesignError(f"Every factor needs at least 2 levels, got {levels}")
    n_runs = int(np.prod(levels, dtype=object))
    if n_runs > MAX_RUNS:
        raise TooManyRuns(
            f"Full factorial of {levels} has {n_runs} runs, over the cap of {MAX_RUNS}"
        )
    if len(levels) > MAX_FULL_FACTORIAL_FACTORS:
        raise TooManyFactors(
            f"Full factorials support at most {MAX_FULL_FACTORIAL_FACTORS} factors, "
            f"got {len(levels)}"
        )
    indices = _yates_indices(levels)
    matrix = np.column_stack([level_grid(n)[indices[:, j]] for j, n in enumerate(levels)])
    coding = tuple(Coding.TWO_LEVEL_PM1 if n == 2 else Coding.LEVEL_GRID for n in levels)
    return Design(
        family=DesignFamily.FULL_FACTORIAL,
        factor_names=default_factor_names(len(levels)),
        matrix=matrix,
        coding=coding,
        metadata=DesignMetadata(levels=tuple(levels)),
    )


_GENERATOR = re.compile(r"^\s*([A-Z])\s*=\s*([+-]?)\s*([A-Z]*)\s*$")


def parse_generator(generator: str, base: str, k: int) -> Tuple[str, int, Word]:
    """Parses `"D=ABC"` or `"D=-ABC"` into the defined letter, the sign and the defining word
    `D * ABC`."""
    match = _GENERATOR.match(generator)
    if match is None:
        raise InvalidGenerator(f"Cannot parse generator {generator!r}, expected e.g. 'D=ABC'")
    letter, sign, product = match.groups()
    if letter not in FRACTIONAL_LETTERS[:k] or letter in base:
        raise InvalidGenerator(
            f"Generator {generator!r} must define one of the added factors "
            f"{list(FRACTIONAL_LETTERS[len(base):k])}"
        )
    undefined = sorted(set(product) - set(base))
    if undefined:
        raise InvalidGenerator(
            f"Generator {generator!r} references undefined factor(s) {undefined}; "
            f"base factors are {list(base)}"
        )
    right: Word = frozenset()
    for c in product:
        right = word_product(right, frozenset(c))
    if not right:
        raise DegenerateDesign(f"Generator {generator!r} aliases factor {letter} with {IDENTITY}")
    return letter, -1 if sign == "-" else 1, word_product(right, frozenset(letter))


def _format_word(sign: int, word: Word) -> str:
    letters = "".join(sorted(word, key=FACTOR_LETTERS.index)) or IDENTITY
    return letters if sign > 0 else "-" + letters


def fractional_factorial(k: int, generators: Sequence[str]) -> Design:
    """A 2^(k-p) fraction. The first `k - p` factors (letters `A`, `B`, ... with `I` skipped)
    form a full two-level factorial in standard order; each generator defines one added factor
    as a signed product of base factors.

    # Parameters

    k : `int`
        Total number of factors, 2 to 15.
    generators : `Sequence[str]`
        One word per added factor, e.g. `["D=ABC"]` or `["D=AB", "E=-AC"]`.

    # Returns

    `Design` whose metadata holds the generators, the full defining relation (the 2^p-element
    group generated by the generator words, `I` first) and the resolution.
    """
    if not 2 <= k <= len(FRACTIONAL_LETTERS):
        raise DesignError(
            f"Fractional factorials support 2 to {len(FRACTIONAL_LETTERS)} factors, got {k}"
        )
    p = len(generators)
    if p >= k:
        raise InvalidGenerator(f"{p} generators leave no base factors among {k} factors")
    base = FRACTIONAL_LETTERS[: k - p]

    parsed = []
    for generator in generators:
        letter, sign, word = parse_generator(generator, base, k)
        if any(letter == other for other, _, _ in parsed):
            raise InvalidGenerator(f"Factor {letter} is defined by more than one generator")
        parsed.append((letter, sign, word))

    group = defining_relation([(sign, word) for _, sign, word in parsed])
    short = [word for _, word in group if len(word) == 1]
    if short:
        raise DegenerateDesign(
            f"Factor(s) {sorted(''.join(w) for w in short)} aliased with {IDENTITY}"
        )
    words = sorted(
        (entry for entry in group if entry[1]),
        key=lambda entry: (len(entry[1]), sorted(FACTOR_LETTERS.index(c) for c in entry[1])),
    )
    resolution = min(len(word) for _, word in words) if words else None

    cube = _two_level_cube(k - p)
    columns = {letter: cube[:, j] for j, letter in enumerate(base)}
    for letter, sign, word in parsed:
        column = np.full(cube.shape[0], float(sign))
        for factor in word - {letter}:
            column = column * columns[factor]
        columns[letter] = column
    letters = FRACTIONAL_LETTERS[:k]
    matrix = np.column_stack([columns[letter] for letter in letters])
    logger.debug("2^(%d-%d) design with resolution %s", k, p, resolution)
    return Design(
        family=DesignFamily.FRACTIONAL_FACTORIAL,
        factor_names=tuple(letters),
        matrix=matrix,
        coding=(Coding.TWO_LEVEL_PM1,) * k,
        metadata=DesignMetadata(
            generators=tuple(
                f"{letter}={'-' if sign < 0 else ''}"
                + "".join(sorted(word - {letter}, key=FACTOR_LETTERS.index))
                for letter, sign, word in parsed
            ),
            resolution=resolution,
            defining_relation=(IDENTITY,) + tuple(_format_word(s, w) for s, w in words),
            levels=(2,) * k,
        ),
    )


def sylvester_hadamard(n: int) -> np.ndarray:
    """Hadamard matrix of order `n` (a power of two) by Sylvester doubling."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"Sylvester construction needs a power of two, got {n}")
    matrix = np.array([[1]], dtype=int)
    while matrix.shape[0] < n:
        matrix = np.block([[matrix, matrix], [matrix, -matrix]])
    return matrix


def _cyclic_plackett_burman(first_row: str) -> np.ndarray:
    row = np.array([1 if sign == "+" else -1 for sign in first_row], dtype=int)
    rows = [np.roll(row, shift) for shift in range(len(row))]
    rows.append(-np.ones(len(row), dtype=int))
    return np.array(rows)


def plackett_burman_matrix(n_runs: int) -> np.ndarray:
    """The full `(N, N - 1)` two-level Plackett-Burman matrix for a supported `N`."""
    if n_runs in PLACKETT_BURMAN_FIRST_ROWS:
        return _cyclic_plackett_burman(PLACKETT_BURMAN_FIRST_ROWS[n_runs])
    if n_runs in (4, 8, 16):
        # Dropping the constant first column leaves N - 1 balanced, orthogonal columns.
        return sylvester_hadamard(n_runs)[:, 1:]
    raise TooManyFactors(f"No Plackett-Burman construction with {n_runs} runs")


def plackett_burman(n_factors: int) -> Design:
    """Screening design with N runs, the smallest of 4, 8, 12, 16, 20 and 24 exceeding
    `n_factors`; columns are the first `n_factors` of the N-run construction."""
    if n_factors < 2:
        raise DesignError(f"Plackett-Burman designs need at least 2 factors, got {n_factors}")
    sizes = [n for n in PLACKETT_BURMAN_SIZES if n > n_factors]
    if not sizes:
        raise TooManyFactors(
            f"Plackett-Burman designs support at most {PLACKETT_BURMAN_SIZES[-1] - 1} factors, "
            f"got {n_factors}"
        )
    matrix = plackett_burman_matrix(sizes[0])[:, :n_factors]
    return Design(
        family=DesignFamily.PLACKETT_BURMAN,
        factor_names=default_factor_names(n_factors),
        matrix=matrix.astype(float),
        coding=(Coding.TWO_LEVEL_PM1,) * n_factors,
        metadata=DesignMetadata(levels=(2,) * n_factors),
    )


def central_composite(
    k: int,
    alpha_mode: AlphaMode = AlphaMode.ROTATABLE,
    n_center: int = 1,
    alpha: Optional[float] = None,
) -> Design:
    """Cube points, then two axial points per factor at -alpha and +alpha, then center points.

    A rotatable design uses alpha = (2^k)^(1/4); a face-centered one alpha = 1; a custom design
    takes `alpha`, which must be positive.
    """
    alpha_mode = AlphaMode(alpha_mode)
    if k < 2:
        raise KTooSmall(f"Central composite designs need at least 2 factors, got {k}")
    if k > 8:
        raise TooManyFactors(f"Central composite designs support at most 8 factors, got {k}")
    if n_center < 1:
        raise DesignError(f"n_center must be >= 1, got {n_center}")
    if alpha_mode == AlphaMode.ROTATABLE:
        alpha = (2.0 ** k) ** 0.25
    elif alpha_mode == AlphaMode.FACE_CENTERED:
        alpha = 1.0
    elif alpha is None or not alpha > 0:
        raise InvalidAlpha(f"Custom alpha must be a positive number, got {alpha}")
    axial = np.zeros((2 * k, k))
    for j in range(k):
        axial[2 * j, j] = -alpha
        axial[2 * j + 1, j] = alpha
    matrix = np.vstack([_two_level_cube(k), axial, np.zeros((n_center, k))])
    return Design(
        family=DesignFamily.CENTRAL_COMPOSITE,
        factor_names=default_factor_names(k),
        matrix=matrix,
        coding=(Coding.FIVE_LEVEL_CCD,) * k,
        metadata=DesignMetadata(n_center=n_center, alpha=float(alpha)),
    )


def box_behnken(k: int, n_center: int = 1) -> Design:
    """For each pair of factors, the four runs with that pair at -1/+1 and the rest at 0;
    then `n_center` center points. Corners of the cube are never visited."""
    if k < 3:
        raise KTooSmall(f"Box-Behnken designs need at least 3 factors, got {k}")
    if k > 7:
        raise TooManyFactors(f"Box-Behnken designs support at most 7 factors, got {k}")
    if n_center < 1:
        raise DesignError(f"n_center must be >= 1, got {n_center}")
    rows: List[np.ndarray] = []
    square = _two_level_cube(2)
    for i, j in itertools.combinations(range(k), 2):
        for a, b in square:
            row = np.zeros(k)
            row[i], row[j] = a, b
            rows.append(row)
    matrix = np.vstack([np.array(rows), np.zeros((n_center, k))])
    return Design(
        family=DesignFamily.BOX_BEHNKEN,
        factor_names=default_factor_names(k),
        matrix=matrix,
        coding=(Coding.THREE_LEVEL_BB,) * k,
        metadata=DesignMetadata(n_center=n_center, levels=(3,) * k),
    )
