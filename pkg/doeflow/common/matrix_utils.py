from typing import List, Sequence, Tuple

import numpy as np

# Relative to the column's scale; a column below this spread is treated as constant.
CONSTANT_TOLERANCE = 1e-12


def constant_columns(matrix: np.ndarray) -> List[int]:
    """Indices of the columns of `matrix` with (numerically) zero variance."""
    matrix = np.asarray(matrix, dtype=float)
    constant = []
    for j in range(matrix.shape[1]):
        column = matrix[:, j]
        scale = max(1.0, float(np.max(np.abs(column)))) if column.size else 1.0
        if column.size == 0 or float(np.ptp(column)) <= CONSTANT_TOLERANCE * scale:
            constant.append(j)
    return constant


def correlated_pairs(
    matrix: np.ndarray, labels: Sequence[str], threshold: float = 0.999
) -> List[Tuple[str, str, float]]:
    """Returns every pair of columns of `matrix` whose absolute Pearson correlation is at least
    `threshold`, as `(label_a, label_b, |r|)` in column order. Constant columns are skipped, see
    `constant_columns`.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != len(labels):
        raise ValueError(
            f"Matrix with shape {matrix.shape} does not match {len(labels)} column labels"
        )
    skip = set(constant_columns(matrix))
    centered = matrix - matrix.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    pairs = []
    for a in range(matrix.shape[1]):
        if a in skip:
            continue
        for b in range(a + 1, matrix.shape[1]):
            if b in skip:
                continue
            r = float(np.dot(centered[:, a], centered[:, b]) / (norms[a] * norms[b]))
            r = min(1.0, abs(r))
            if r >= threshold:
                pairs.append((labels[a], labels[b], r))
    return pairs
