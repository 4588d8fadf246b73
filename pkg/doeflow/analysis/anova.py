import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from allennlp.common.logging import AllenNlpLogger

from doeflow.analysis.model_matrix import Dataset, ModelTerm, build_model_matrix
from doeflow.analysis.regression import f_test, residual_fit
from doeflow.common.checks import AnalysisError, EmptyResults, NoResidualDf, NotTwoLevel
from doeflow.common.util import json_number
from doeflow.design_gen.aliasing import default_model_terms, term_column
from doeflow.design_gen.design import Design

logger = AllenNlpLogger(__name__)

RESIDUAL = "Residual"
TOTAL = "Total"


@dataclass(frozen=True)
class AnovaRow:
    term: str
    sum_of_squares: float
    df: int
    mean_square: float
    f_statistic: Optional[float] = None
    p_value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "term": self.term,
            "sum_of_squares": self.sum_of_squares,
            "df": self.df,
            "mean_square": self.mean_square,
            "f_statistic": None if self.f_statistic is None else json_number(self.f_statistic),
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class AnovaTable:
    """Sequential (type I) analysis of variance: one row per model term in the order the terms
    were given, followed by the `Residual` and `Total` rows.

    On balanced orthogonal designs the sequential sums of squares are the classical partition
    and do not depend on the term order. On unbalanced data (for instance after failed runs
    were excluded) each term is adjusted only for the terms before it, so the order matters.
    """

    rows: List[AnovaRow]
    alpha: float
    response: str = "y"
    n_excluded: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def term_rows(self) -> List[AnovaRow]:
        return [row for row in self.rows if row.term not in (RESIDUAL, TOTAL)]

    @property
    def residual(self) -> AnovaRow:
        return self.row(RESIDUAL)

    @property
    def total(self) -> AnovaRow:
        return self.row(TOTAL)

    def row(self, term: Union[str, ModelTerm]) -> AnovaRow:
        label = term.label if isinstance(term, ModelTerm) else term
        for row in self.rows:
            if row.term == label:
                return row
        raise KeyError(f"No ANOVA row for {label!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "response": self.response,
            "alpha": self.alpha,
            "n_excluded": self.n_excluded,
            "rows": [row.to_dict() for row in self.rows],
            "notes": list(self.notes),
        }


def anova(dataset: Dataset, terms: Sequence[ModelTerm], alpha: float = 0.05) -> AnovaTable:
    """Sequential ANOVA of the dataset's response on `terms`.

    Each term's sum of squares is the drop in residual sum of squares when its columns are
    added to the intercept and the terms before it; its degrees of freedom are the rank it
    adds. A term that adds no rank (aliased with earlier terms, or constant) is kept with zero
    sum of squares and a note.

    # Raises

    `EmptyResults` with fewer than two runs, `UnknownFactor` for a term over an unknown factor.
    A saturated model (no residual degrees of freedom) returns the table without F and p and
    warns with `NoResidualDf`.
    """
    if dataset.n < 2:
        raise EmptyResults(f"ANOVA needs at least 2 runs, got {dataset.n}")
    if not 0 < alpha < 1:
        raise AnalysisError(f"alpha must lie in (0, 1), got {alpha}")
    model = build_model_matrix(dataset, terms)
    y = dataset.response
    notes: List[str] = []
    if dataset.n_excluded:
        notes.append(
            f"{dataset.n_excluded} failed runs excluded; sums of squares are sequential in the "
            f"given term order"
        )

    previous_ss, previous_rank = residual_fit(model.columns_through(0), y)
    ss_total = previous_ss
    effects = []
    for index, term in enumerate(model.terms, start=1):
        ss, rank = residual_fit(model.columns_through(index), y)
        df = rank - previous_rank
        if df == 0:
            notes.append(f"{term.label} adds no degrees of freedom (aliased or constant)")
            logger.warning_once(f"Term {term.label} adds no degrees of freedom")
            effects.append((term.label, 0.0, 0))
        else:
            effects.append((term.label, max(0.0, previous_ss - ss), df))
        previous_ss, previous_rank = ss, rank

    ss_residual = previous_ss
    df_residual = dataset.n - previous_rank
    rows = []
    if df_residual == 0:
        message = (
            f"The model is saturated ({dataset.n} runs, rank {previous_rank}); F tests are omitted"
        )
        logger.warning(message)
        warnings.warn(message, NoResidualDf)
        notes.append(message)
    for label, ss, df in effects:
        mean_square = ss / df if df else 0.0
        f: Optional[float] = None
        p: Optional[float] = None
        if df and df_residual:
            f, p = f_test(ss, df, ss_residual, df_residual, ss_total)
        rows.append(AnovaRow(label, ss, df, mean_square, f, p))
    rows.append(
        AnovaRow(
            RESIDUAL,
            ss_residual,
            df_residual,
            ss_residual / df_residual if df_residual else 0.0,
        )
    )
    rows.append(AnovaRow(TOTAL, ss_total, dataset.n - 1, ss_total / (dataset.n - 1)))
    return AnovaTable(
        rows=rows,
        alpha=alpha,
        response=dataset.response_name,
        n_excluded=dataset.n_excluded,
        notes=notes,
    )


def ancova(
    dataset: Dataset, treatment: str, covariates: Sequence[str], alpha: float = 0.05
) -> AnovaTable:
    """Analysis of covariance: the covariates enter the sequential ANOVA before the treatment,
    so the treatment's F tests its effect after adjusting for them.

    # Raises

    `AnalysisError` if the treatment is observed at fewer than two levels, plus everything
    `anova` raises.
    """
    levels = dataset.observed_levels(treatment)
    if len(levels) < 2:
        raise AnalysisError(
            f"Treatment {treatment!r} needs at least 2 observed levels, got {levels}"
        )
    terms = [ModelTerm.covariate(name) for name in covariates]
    terms.append(ModelTerm.main(treatment, grouped=True))
    return anova(dataset, terms, alpha)


@dataclass(frozen=True)
class ScreeningEntry:
    term: str
    p_value: float
    significant: bool
    sum_of_squares: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "term": self.term,
            "p_value": self.p_value,
            "significant": self.significant,
            "sum_of_squares": self.sum_of_squares,
        }


def screen_rank(table: AnovaTable, alpha: Optional[float] = None) -> List[ScreeningEntry]:
    """Ranks the tested terms by p value, ascending. Ties go to the larger sum of squares, then
    to the alphabetically first term. Terms without an F test are left out."""
    alpha = table.alpha if alpha is None else alpha
    tested = [row for row in table.term_rows if row.p_value is not None]
    tested.sort(key=lambda row: (row.p_value, -row.sum_of_squares, row.term))
    return [
        ScreeningEntry(row.term, row.p_value, row.p_value < alpha, row.sum_of_squares)
        for row in tested
    ]


def effects_two_level(
    design: Design, responses: Sequence[float], terms: Optional[Sequence[str]] = None
) -> Dict[str, float]:
    """Classical effect estimates: the mean response where a term's contrast is +1 minus the mean
    where it is -1. On a balanced design this is twice the term's coefficient in a regression on
    coded columns.

    # Parameters

    design : `Design`
        A two-level design coded -1/+1.
    responses : `Sequence[float]`
        One response per run, in design order.
    terms : `Sequence[str]`, optional (default = `None`)
        Terms such as `"A"`, `"A:B"` or `"AB"`; main effects and two-factor interactions by
        default.

    # Raises

    `NotTwoLevel` if the design is not coded -1/+1 or a term's contrast is unbalanced.
    """
    if not design.is_two_level:
        raise NotTwoLevel(
            f"Effect estimates need a two-level design, got {design.family.value} with codings "
            f"{sorted({coding.value for coding in design.coding})}"
        )
    y = np.asarray(responses, dtype=float)
    if y.shape != (design.n_runs,):
        raise AnalysisError(f"Got {y.shape[0]} responses for {design.n_runs} runs")
    terms = list(terms) if terms is not None else default_model_terms(design.factor_names)
    effects = {}
    for term in terms:
        contrast = term_column(design, term)
        high, low = contrast > 0, contrast < 0
        if high.sum() != low.sum() or high.sum() + low.sum() != design.n_runs:
            raise NotTwoLevel(f"The contrast of {term!r} is not balanced in this design")
        effects[term] = float(y[high].mean() - y[low].mean())
    return effects
