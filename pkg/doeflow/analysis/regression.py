import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from doeflow.analysis.model_matrix import Dataset, ModelTerm, build_model_matrix
from doeflow.common.checks import AnalysisError, NotNested, RankDeficient
from doeflow.common.matrix_utils import constant_columns, correlated_pairs
from doeflow.common.stats_utils import f_pvalue, t_pvalue
from doeflow.common.util import json_number

logger = logging.getLogger(__name__)

# A diagonal entry of R below this fraction of the largest one marks a dependent column.
RANK_TOLERANCE = 1e-10
# A residual mean square below this fraction of the total sum of squares counts as an exact fit.
EXACT_FIT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class RegressionResult:
    terms: List[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adjusted_r_squared: float
    residuals: np.ndarray
    n: int
    df_residual: int
    ss_residual: float

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "df_residual": self.df_residual,
            "r_squared": self.r_squared,
            "adjusted_r_squared": self.adjusted_r_squared,
            "ss_residual": self.ss_residual,
            "coefficients": [
                {
                    "term": term,
                    "estimate": float(self.coefficients[i]),
                    "standard_error": float(self.standard_errors[i]),
                    "t_statistic": json_number(float(self.t_statistics[i])),
                    "p_value": float(self.p_values[i]),
                }
                for i, term in enumerate(self.terms)
            ],
        }


def _dependent_columns(r: np.ndarray) -> List[int]:
    diagonal = np.abs(np.diag(r))
    scale = float(diagonal.max()) if diagonal.size else 0.0
    return [j for j, value in enumerate(diagonal) if value <= RANK_TOLERANCE * max(scale, 1.0)]


def _rank_deficient(
    x: np.ndarray, labels: Sequence[str], dependent: Sequence[int]
) -> RankDeficient:
    pairs = correlated_pairs(x, labels)
    details = [f"{a} ~ {b} (|r| = {r:.4f})" for a, b, r in pairs]
    constant = [labels[j] for j in constant_columns(x)]
    # One constant column is the intercept.
    if len(constant) > 1:
        details.append("constant columns " + ", ".join(constant))
    if not details:
        details.append("dependent columns " + ", ".join(labels[j] for j in dependent))
    return RankDeficient(
        "The model matrix is rank deficient; confounded columns: " + "; ".join(details), pairs
    )


def _total_sum_of_squares(x: np.ndarray, y: np.ndarray) -> float:
    """Centered when the model has a constant column, uncentered otherwise."""
    has_constant = any(
        np.allclose(x[:, j], x[0, j]) and x[0, j] != 0 for j in range(x.shape[1])
    )
    deviations = y - y.mean() if has_constant else y
    return float(np.dot(deviations, deviations))


def ols_regression(
    x: np.ndarray, y: Sequence[float], labels: Optional[Sequence[str]] = None
) -> RegressionResult:
    """Least-squares fit of `y` on the columns of `x` through a QR decomposition.

    Standard errors are the square roots of the diagonal of `s^2 (X'X)^-1`; t statistics are
    tested two-sided against a Student t with `n - p` degrees of freedom. When the fit is exact
    (no residual variation) a non-zero coefficient gets `t = inf` and `p = 0`.

    # Raises

    `AnalysisError` if there are not more rows than columns, `RankDeficient` if the columns are
    linearly dependent. Its message names the pairs of (nearly) identical columns.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    labels = list(labels) if labels is not None else [f"x{j}" for j in range(p)]
    if y.shape != (n,):
        raise AnalysisError(f"Got {y.shape[0]} responses for a {n}-row model matrix")
    if n <= p:
        raise AnalysisError(f"Regression needs more runs than columns, got {n} runs, {p} columns")
    q, r = np.linalg.qr(x)
    dependent = _dependent_columns(r)
    if dependent:
        raise _rank_deficient(x, labels, dependent)

    coefficients = np.linalg.solve(r, q.T @ y)
    residuals = y - x @ coefficients
    ss_residual = float(np.dot(residuals, residuals))
    df_residual = n - p
    sigma2 = ss_residual / df_residual
    ss_total = _total_sum_of_squares(x, y)
    r_inverse = np.linalg.inv(r)
    standard_errors = np.sqrt(sigma2 * np.sum(r_inverse ** 2, axis=1))

    exact = ss_residual <= EXACT_FIT_TOLERANCE * max(ss_total, float(np.dot(y, y)))
    t_statistics = np.empty(p)
    p_values = np.empty(p)
    for j in range(p):
        if exact or standard_errors[j] == 0:
            nonzero = abs(coefficients[j]) > 1e-12 * max(1.0, float(np.abs(coefficients).max()))
            t_statistics[j] = np.sign(coefficients[j]) * np.inf if nonzero else 0.0
            p_values[j] = 0.0 if nonzero else 1.0
        else:
            t_statistics[j] = coefficients[j] / standard_errors[j]
            p_values[j] = t_pvalue(float(t_statistics[j]), df_residual)

    if ss_total > 0:
        r_squared = min(1.0, max(0.0, 1.0 - ss_residual / ss_total))
    else:
        r_squared = 1.0
    adjusted = 1.0 - (1.0 - r_squared) * (n - 1) / df_residual
    return RegressionResult(
        terms=labels,
        coefficients=coefficients,
        standard_errors=standard_errors,
        t_statistics=t_statistics,
        p_values=p_values,
        r_squared=r_squared,
        adjusted_r_squared=min(adjusted, r_squared),
        residuals=residuals,
        n=n,
        df_residual=df_residual,
        ss_residual=ss_residual,
    )


def regression(
    dataset: Dataset, terms: Sequence[ModelTerm], include_intercept: bool = True
) -> RegressionResult:
    """Fits the polynomial description model `terms` to the dataset's response."""
    model = build_model_matrix(dataset, terms, include_intercept)
    logger.info(
        "Fitting %s ~ %s on %d runs",
        dataset.response_name,
        " + ".join(term.label for term in terms) or "1",
        dataset.n,
    )
    return ols_regression(model.matrix, dataset.response, model.labels)


def residual_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, int]:
    """Residual sum of squares and rank of the least-squares fit of `y` on `x`. Unlike
    `ols_regression` this tolerates dependent columns."""
    if x.shape[1] == 0:
        return float(np.dot(y, y)), 0
    coefficients, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    residuals = y - x @ coefficients
    return float(np.dot(residuals, residuals)), int(rank)


def f_test(
    ss_effect: float, df_effect: int, ss_residual: float, df_residual: int, ss_total: float
) -> Tuple[float, float]:
    """`(F, p)` of an effect against the residual. When the residual mean square vanishes
    relative to the total variation, an effect with no sum of squares gets `F = 0, p = 1` and
    any other effect `F = inf, p = 0`."""
    tolerance = EXACT_FIT_TOLERANCE * ss_total
    ms_residual = ss_residual / df_residual
    if ms_residual <= tolerance:
        if ss_effect <= tolerance:
            return 0.0, 1.0
        return float("inf"), 0.0
    f = (ss_effect / df_effect) / ms_residual
    return f, f_pvalue(f, df_effect, df_residual)


@dataclass(frozen=True)
class ModelComparison:
    f_statistic: float
    p_value: float
    df_numerator: int
    df_denominator: int
    ss_gain: float
    preferred: str
    reduced_terms: List[str]
    full_terms: List[str]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reduced_terms": self.reduced_terms,
            "full_terms": self.full_terms,
            "f_statistic": json_number(self.f_statistic),
            "p_value": self.p_value,
            "df_numerator": self.df_numerator,
            "df_denominator": self.df_denominator,
            "ss_gain": self.ss_gain,
            "preferred": self.preferred,
        }


def compare_models(
    terms_reduced: Sequence[ModelTerm],
    terms_full: Sequence[ModelTerm],
    dataset: Dataset,
    alpha: float = 0.05,
) -> ModelComparison:
    """Partial F test of a reduced model against a full model that contains it, the check for
    whether a nonlinear description adds anything over a linear one. The full model is
    preferred only if `p < alpha`.

    # Raises

    `NotNested` unless the reduced terms are a strict subset of the full terms, `AnalysisError`
    if the full model leaves no residual degrees of freedom.
    """
    reduced_labels = [term.label for term in terms_reduced]
    full_labels = [term.label for term in terms_full]
    if not set(reduced_labels) < set(full_labels):
        raise NotNested(
            f"Terms {reduced_labels} are not a strict subset of {full_labels}"
        )
    y = dataset.response
    reduced = build_model_matrix(dataset, terms_reduced)
    full = build_model_matrix(dataset, terms_full)
    ss_reduced, rank_reduced = residual_fit(reduced.matrix, y)
    ss_full, rank_full = residual_fit(full.matrix, y)
    df_denominator = dataset.n - rank_full
    if df_denominator < 1:
        raise AnalysisError(
            f"The full model uses all {dataset.n} runs; no residual degrees of freedom are left"
        )
    df_numerator = rank_full - rank_reduced
    ss_gain = max(0.0, ss_reduced - ss_full)
    if df_numerator == 0:
        f, p = 0.0, 1.0
    else:
        deviations = y - y.mean()
        f, p = f_test(
            ss_gain, df_numerator, ss_full, df_denominator, float(np.dot(deviations, deviations))
        )
    preferred = "full" if p < alpha else "reduced"
    logger.info(
        "Model comparison %s vs %s: F = %s, p = %.4g, preferred %s",
        reduced_labels,
        full_labels,
        f,
        p,
        preferred,
    )
    return ModelComparison(
        f_statistic=f,
        p_value=p,
        df_numerator=df_numerator,
        df_denominator=df_denominator,
        ss_gain=ss_gain,
        preferred=preferred,
        reduced_terms=reduced_labels,
        full_terms=full_labels,
    )
