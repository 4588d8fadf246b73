import itertools
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from doeflow.common.checks import AnalysisError, EmptyResults, UnknownFactor
from doeflow.runner.results import ResultSet
from doeflow.spec_model.recommenders import AnalysisMethod
from doeflow.spec_model.schema import Categorical, ContinuousRange, Factor

logger = logging.getLogger(__name__)

MAX_INTERACTION_ORDER = 3
MAX_DEGREE = 3

INTERCEPT = "(Intercept)"


class TermKind(str, Enum):
    MAIN = "main"
    INTERACTION = "interaction"
    POWER = "power"
    COVARIATE = "covariate"


_GROUPED = re.compile(r"^grp\((?P<inner>[^()]+)\)$")
_COVARIATE = re.compile(r"^cov\((?P<name>[^()]+)\)$")
_POWER = re.compile(r"^(?P<name>[^:^]+)\^(?P<degree>[0-9]+)$")


@dataclass(frozen=True)
class ModelTerm:
    """One term of a linear model.

    # Parameters

    kind : `TermKind`
    factors : `Tuple[str, ...]`
        One factor, or two to three for interactions.
    degree : `int`, optional (default = `1`)
        Only used by `TermKind.POWER`.
    grouped : `bool`, optional (default = `False`)
        Treat numeric levels as categories (the classical ANOVA view), so the term gets `L - 1`
        contrast columns instead of a single slope.
    """

    kind: TermKind
    factors: Tuple[str, ...]
    degree: int = 1
    grouped: bool = False

    def __post_init__(self) -> None:
        if not self.factors:
            raise ValueError("A model term needs at least one factor")
        if self.kind == TermKind.INTERACTION:
            if not 2 <= len(self.factors) <= MAX_INTERACTION_ORDER:
                raise ValueError(
                    f"Interactions take 2 to {MAX_INTERACTION_ORDER} factors, got {self.factors}"
                )
            if len(set(self.factors)) != len(self.factors):
                raise ValueError(f"Interaction repeats a factor: {self.factors}")
        elif len(self.factors) != 1:
            raise ValueError(f"A {self.kind.value} term takes one factor, got {self.factors}")
        if self.kind == TermKind.POWER and not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"Polynomial degree must be in [1, {MAX_DEGREE}], got {self.degree}")

    @classmethod
    def main(cls, factor: str, grouped: bool = False) -> "ModelTerm":
        return cls(TermKind.MAIN, (factor,), grouped=grouped)

    @classmethod
    def interaction(cls, *factors: str, grouped: bool = False) -> "ModelTerm":
        return cls(TermKind.INTERACTION, tuple(factors), grouped=grouped)

    @classmethod
    def power(cls, factor: str, degree: int) -> "ModelTerm":
        return cls(TermKind.POWER, (factor,), degree=degree)

    @classmethod
    def covariate(cls, factor: str) -> "ModelTerm":
        return cls(TermKind.COVARIATE, (factor,))

    @classmethod
    def from_string(cls, text: str) -> "ModelTerm":
        """Parses `A`, `A:B`, `A:B:C`, `A^2`, `cov(c)`, `grp(A)` and `grp(A:B)`."""
        text = text.strip()
        grouped = _GROUPED.match(text)
        if grouped:
            inner = cls.from_string(grouped.group("inner"))
            if inner.kind not in (TermKind.MAIN, TermKind.INTERACTION):
                raise ValueError(f"Only main effects and interactions can be grouped: {text!r}")
            return cls(inner.kind, inner.factors, grouped=True)
        covariate = _COVARIATE.match(text)
        if covariate:
            return cls.covariate(covariate.group("name").strip())
        power = _POWER.match(text)
        if power:
            return cls.power(power.group("name").strip(), int(power.group("degree")))
        parts = [part.strip() for part in text.split(":")]
        if any(not part for part in parts):
            raise ValueError(f"Cannot parse model term {text!r}")
        if len(parts) == 1:
            return cls.main(parts[0])
        return cls.interaction(*parts)

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def label(self) -> str:
        if self.kind == TermKind.COVARIATE:
            return f"cov({self.factors[0]})"
        if self.kind == TermKind.POWER:
            return self.factors[0] if self.degree == 1 else f"{self.factors[0]}^{self.degree}"
        label = ":".join(self.factors)
        return f"grp({label})" if self.grouped else label

    def __str__(self) -> str:
        return self.label


def parse_terms(texts: Sequence[str]) -> List[ModelTerm]:
    return [ModelTerm.from_string(text) for text in texts]


@dataclass(frozen=True)
class Dataset:
    """The analysable part of a `ResultSet` for one response metric: a column per factor and the
    response of every run that completed, in run id order.

    # Parameters

    columns : `Dict[str, np.ndarray]`
        Float arrays for numeric factors, object arrays for categorical ones.
    response : `np.ndarray`
    response_name : `str`, optional (default = `"y"`)
    ranges : `Dict[str, Tuple[float, float]]`, optional
        Declared `(low, high)` per numeric factor; numeric factors are centered and scaled so
        that the range maps to [-1, 1].
    levels : `Dict[str, Tuple[Any, ...]]`, optional
        Level order per categorical factor. A factor listed here is categorical.
    n_excluded : `int`, optional (default = `0`)
        Runs left out because they failed.
    """

    columns: Dict[str, np.ndarray]
    response: np.ndarray
    response_name: str = "y"
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    levels: Dict[str, Tuple[Any, ...]] = field(default_factory=dict)
    n_excluded: int = 0

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def factor_names(self) -> List[str]:
        return list(self.columns)

    def is_categorical(self, name: str) -> bool:
        return name in self.levels

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise UnknownFactor(
                f"Factor {name!r} is not in the dataset, which has {self.factor_names}"
            )
        return self.columns[name]

    def observed_levels(self, name: str) -> List[Any]:
        """Distinct values of a factor: declared order for categorical factors, ascending for
        numeric ones."""
        column = self.column(name)
        present = set(column.tolist())
        if self.is_categorical(name):
            return [level for level in self.levels[name] if level in present]
        return sorted(present)

    def with_response(self, response: np.ndarray, name: Optional[str] = None) -> "Dataset":
        """Same factor columns, another response. Used by power simulations."""
        return Dataset(
            columns=self.columns,
            response=np.asarray(response, dtype=float),
            response_name=name or self.response_name,
            ranges=self.ranges,
            levels=self.levels,
            n_excluded=self.n_excluded,
        )

    @classmethod
    def from_columns(
        cls,
        columns: Mapping[str, Sequence[Any]],
        response: Sequence[float],
        ranges: Optional[Mapping[str, Tuple[float, float]]] = None,
        levels: Optional[Mapping[str, Sequence[Any]]] = None,
        response_name: str = "y",
    ) -> "Dataset":
        """Builds a dataset from plain columns. Columns holding any string are categorical, with
        levels in order of first appearance unless `levels` says otherwise."""
        response_array = np.asarray(response, dtype=float)
        level_map = {name: tuple(values) for name, values in (levels or {}).items()}
        arrays: Dict[str, np.ndarray] = {}
        for name, values in columns.items():
            values = list(values)
            if len(values) != response_array.shape[0]:
                raise AnalysisError(
                    f"Column {name!r} has {len(values)} values for {response_array.shape[0]} "
                    f"responses"
                )
            if name in level_map or any(isinstance(value, str) for value in values):
                arrays[name] = np.array(values, dtype=object)
                level_map.setdefault(name, tuple(dict.fromkeys(values)))
            else:
                arrays[name] = np.asarray(values, dtype=float)
        return cls(
            columns=arrays,
            response=response_array,
            response_name=response_name,
            ranges=dict(ranges or {}),
            levels=level_map,
        )

    @classmethod
    def from_results(
        cls,
        results: ResultSet,
        metric: str,
        factors: Optional[Sequence[Factor]] = None,
    ) -> "Dataset":
        """The runs of `results` with status ok, ordered by run id. Failed runs are counted in
        `n_excluded` and logged; analysing what is left is then an unbalanced analysis.

        # Parameters

        results : `ResultSet`
        metric : `str`
        factors : `Sequence[Factor]`, optional (default = `None`)
            Declared factors. They provide the ranges used for coding and the level order of
            categorical factors; without them ranges come from the observed values.

        # Raises

        `UnknownFactor` if `metric` is not a metric of `results`, `EmptyResults` if no run
        completed.
        """
        if metric not in results.metric_names:
            raise UnknownFactor(
                f"Metric {metric!r} is not in the results, which have {list(results.metric_names)}"
            )
        rows = [row for row in results.sorted_rows() if row.ok and metric in row.responses]
        n_excluded = len(results.rows) - len(rows)
        if not rows:
            raise EmptyResults(f"No completed runs with metric {metric!r} to analyse")
        if n_excluded:
            logger.warning(
                "Excluding %d of %d runs that did not complete; the analysis is unbalanced",
                n_excluded,
                len(results.rows),
            )
        declared = {factor.name: factor for factor in factors or []}
        columns: Dict[str, List[Any]] = {
            name: [row.treatment.get(name) for row in rows] for name in results.factor_names
        }
        ranges: Dict[str, Tuple[float, float]] = {}
        levels: Dict[str, Tuple[Any, ...]] = {}
        for name, values in columns.items():
            factor = declared.get(name)
            if factor is not None and isinstance(factor.domain, Categorical):
                levels[name] = tuple(factor.domain.labels)
            elif factor is not None and isinstance(factor.domain, ContinuousRange):
                ranges[name] = (factor.domain.low, factor.domain.high)
        dataset = cls.from_columns(
            columns,
            [row.responses[metric] for row in rows],
            ranges=ranges,
            levels=levels,
            response_name=metric,
        )
        return cls(
            columns=dataset.columns,
            response=dataset.response,
            response_name=metric,
            ranges=dataset.ranges,
            levels=dataset.levels,
            n_excluded=n_excluded,
        )


@dataclass(frozen=True)
class ModelMatrix:
    matrix: np.ndarray
    labels: List[str]
    terms: List[ModelTerm]
    # Columns belonging to each term, in term order. The intercept is not a term.
    term_slices: List[slice]
    has_intercept: bool

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def columns_through(self, n_terms: int) -> np.ndarray:
        """The intercept (if any) and the columns of the first `n_terms` terms."""
        if n_terms == 0:
            stop = 1 if self.has_intercept else 0
        else:
            stop = self.term_slices[n_terms - 1].stop
        return self.matrix[:, :stop]


def sum_contrasts(column: np.ndarray, levels: Sequence[Any]) -> np.ndarray:
    """Sum-to-zero contrast columns: column `j` is +1 for level `j`, -1 for the last level and 0
    otherwise, so `len(levels) - 1` columns in all."""
    contrasts = np.zeros((column.shape[0], max(len(levels) - 1, 0)))
    last = levels[-1] if levels else None
    for j, level in enumerate(levels[:-1]):
        contrasts[:, j] = [1.0 if value == level else 0.0 for value in column]
    if levels:
        is_last = np.array([value == last for value in column])
        contrasts[is_last, :] = -1.0
    return contrasts


def coded_column(dataset: Dataset, name: str) -> np.ndarray:
    """A numeric factor centered on the middle of its range and scaled so the range spans
    [-1, 1]. Without a declared range the observed range is used."""
    column = dataset.column(name)
    if dataset.is_categorical(name):
        raise AnalysisError(f"Factor {name!r} is categorical and has no numeric coding")
    low, high = dataset.ranges.get(name, (float(column.min()), float(column.max())))
    half_width = (high - low) / 2.0
    return (column - (low + high) / 2.0) / (half_width if half_width > 0 else 1.0)


def _factor_block(dataset: Dataset, name: str, grouped: bool) -> Tuple[np.ndarray, List[str]]:
    column = dataset.column(name)
    if grouped or dataset.is_categorical(name):
        levels = dataset.observed_levels(name)
        labels = [f"{name}[{level}]" for level in levels[:-1]]
        return sum_contrasts(column, levels), labels
    return coded_column(dataset, name)[:, None], [name]


def term_block(dataset: Dataset, term: ModelTerm) -> Tuple[np.ndarray, List[str]]:
    """The model-matrix columns of one term and their labels."""
    if term.kind in (TermKind.POWER, TermKind.COVARIATE):
        name = term.factors[0]
        if dataset.is_categorical(name):
            raise AnalysisError(f"{term.label} needs a numeric factor, {name!r} is categorical")
        column = coded_column(dataset, name)
        if term.kind == TermKind.POWER:
            return (column ** term.degree)[:, None], [term.label]
        return column[:, None], [term.label]

    blocks = [_factor_block(dataset, name, term.grouped) for name in term.factors]
    if term.kind == TermKind.MAIN:
        return blocks[0]
    columns, labels = [], []
    for combination in itertools.product(*[range(block.shape[1]) for block, _ in blocks]):
        product = np.ones(dataset.n)
        for (block, _), index in zip(blocks, combination):
            product = product * block[:, index]
        columns.append(product)
        labels.append(":".join(names[index] for (_, names), index in zip(blocks, combination)))
    matrix = np.column_stack(columns) if columns else np.zeros((dataset.n, 0))
    return matrix, labels


def build_model_matrix(
    dataset: Dataset, terms: Sequence[ModelTerm], include_intercept: bool = True
) -> ModelMatrix:
    """Stacks the columns of `terms` (in order) behind an optional intercept column.

    Categorical factors, and numeric factors in grouped terms, expand to `L - 1` sum-to-zero
    contrast columns so the intercept is the grand mean. Numeric factors are coded to [-1, 1]
    over their declared range.

    # Raises

    `UnknownFactor` if a term references a factor that is not in the dataset, `EmptyResults` if
    the dataset has no rows.
    """
    if dataset.n == 0:
        raise EmptyResults("The dataset has no rows")
    for term in terms:
        for name in term.factors:
            dataset.column(name)
    blocks = [np.ones((dataset.n, 1))] if include_intercept else []
    labels = [INTERCEPT] if include_intercept else []
    slices = []
    for term in terms:
        block, block_labels = term_block(dataset, term)
        start = len(labels)
        blocks.append(block)
        labels.extend(block_labels)
        slices.append(slice(start, len(labels)))
    matrix = np.hstack(blocks) if blocks else np.zeros((dataset.n, 0))
    return ModelMatrix(
        matrix=matrix,
        labels=labels,
        terms=list(terms),
        term_slices=slices,
        has_intercept=include_intercept,
    )


def default_terms(
    dataset: Dataset,
    method: AnalysisMethod,
    factors: Optional[Sequence[str]] = None,
    max_order: int = 2,
) -> List[ModelTerm]:
    """The model a method starts from.

    For ANOVA: every factor as a grouped main effect, then all grouped interactions up to
    `max_order`. For regression: numeric main effects, two-factor interactions, and squares of
    numeric factors observed at three or more levels.
    """
    names = list(factors) if factors is not None else dataset.factor_names
    terms: List[ModelTerm] = []
    if method == AnalysisMethod.ANOVA:
        terms.extend(ModelTerm.main(name, grouped=True) for name in names)
        for order in range(2, min(max_order, MAX_INTERACTION_ORDER) + 1):
            terms.extend(
                ModelTerm.interaction(*combination, grouped=True)
                for combination in itertools.combinations(names, order)
            )
        return terms
    terms.extend(ModelTerm.main(name) for name in names)
    terms.extend(ModelTerm.interaction(a, b) for a, b in itertools.combinations(names, 2))
    terms.extend(
        ModelTerm.power(name, 2)
        for name in names
        if not dataset.is_categorical(name) and len(dataset.observed_levels(name)) >= 3
    )
    return terms
