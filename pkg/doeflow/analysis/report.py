"""
Turns a `ResultSet` into an `AnalysisReport`: the analyses the purpose of investigation calls
for, run per response metric, with the digests of every input so a report can be traced back to
the exact specification, plan and results it was computed from.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from allennlp.common import util as common_util

from doeflow import __version__
from doeflow.analysis.anova import AnovaTable, ScreeningEntry, ancova, anova, screen_rank
from doeflow.analysis.model_matrix import (
    Dataset,
    ModelTerm,
    TermKind,
    build_model_matrix,
    default_terms,
    parse_terms,
)
from doeflow.analysis.power import PowerFollowup, low_power_followup
from doeflow.analysis.regression import (
    ModelComparison,
    RegressionResult,
    compare_models,
    regression,
)
from doeflow.common.checks import AnalysisError
from doeflow.common.util import format_real
from doeflow.runner.results import ResultSet
from doeflow.spec_model.recommenders import AnalysisMethod, AnalysisPlan, recommend_analysis
from doeflow.spec_model.schema import FactorRole, PreliminaryPurpose, TestSpecification

logger = logging.getLogger(__name__)

# A level is dropped from a factor's range when it alone accounts for this share of the spread
# of the level means.
RESTRICT_SHARE = 0.5


class MethodChoice(str, Enum):
    AUTO = "auto"
    ANOVA = "anova"
    REGRESSION = "regression"
    ANCOVA = "ancova"


class Decision(str, Enum):
    RETAIN = "retain"
    DROP = "drop"
    BLOCK = "block"


@dataclass(frozen=True)
class FactorVerdict:
    """What a screening concludes for one factor of the next test specification."""

    factor: str
    decision: Decision
    p_value: Optional[float]
    level_means: Dict[str, float]
    block_level: Optional[Any] = None
    restricted_range: Optional[Tuple[float, float]] = None

    def describe(self) -> str:
        if self.decision == Decision.DROP:
            return f"{self.factor}: negligible, drop from the treatment factors"
        if self.decision == Decision.BLOCK:
            return f"{self.factor}: block at {self.block_level}"
        if self.restricted_range is not None:
            low, high = self.restricted_range
            return (
                f"{self.factor}: retain as a treatment factor with its range restricted to "
                f"[{format_real(low)}, {format_real(high)}]"
            )
        return f"{self.factor}: retain as a treatment factor"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "factor": self.factor,
            "decision": self.decision.value,
            "p_value": self.p_value,
            "level_means": self.level_means,
            "block_level": self.block_level,
            "restricted_range": list(self.restricted_range) if self.restricted_range else None,
            "summary": self.describe(),
        }


@dataclass
class MetricAnalysis:
    metric: str
    n_runs: int
    n_excluded: int
    anova: Optional[AnovaTable] = None
    regression: Optional[RegressionResult] = None
    comparison: Optional[ModelComparison] = None
    screening: List[ScreeningEntry] = field(default_factory=list)
    verdicts: List[FactorVerdict] = field(default_factory=list)
    followups: List[PowerFollowup] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric,
            "n_runs": self.n_runs,
            "n_excluded": self.n_excluded,
            "anova": self.anova.to_dict() if self.anova else None,
            "regression": self.regression.to_dict() if self.regression else None,
            "comparison": self.comparison.to_dict() if self.comparison else None,
            "screening": [entry.to_dict() for entry in self.screening],
            "verdicts": [verdict.to_dict() for verdict in self.verdicts],
            "power": [followup.to_dict() for followup in self.followups],
            "notes": list(self.notes),
        }


@dataclass
class AnalysisReport:
    methods: List[str]
    alpha: float
    recommendation: Optional[AnalysisPlan]
    digests: Dict[str, Optional[str]]
    status_counts: Dict[str, int]
    metrics: List[MetricAnalysis]
    conclusions: List[str] = field(default_factory=list)

    def metric(self, name: str) -> MetricAnalysis:
        for analysis in self.metrics:
            if analysis.metric == name:
                return analysis
        raise KeyError(f"No analysis of metric {name!r}")

    def to_dict(self) -> Dict[str, Any]:
        recommendation = None
        if self.recommendation is not None:
            recommendation = {
                "row": self.recommendation.row,
                "methods": [method.value for method in self.recommendation.methods],
                "note": self.recommendation.note,
            }
        return common_util.sanitize(
            {
                "toolkit_version": __version__,
                "methods": self.methods,
                "alpha": self.alpha,
                "recommendation": recommendation,
                "digests": self.digests,
                "status_counts": self.status_counts,
                "metrics": [analysis.to_dict() for analysis in self.metrics],
                "conclusions": list(self.conclusions),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render_text(self) -> str:
        return render_text(self)


def resolve_methods(
    choice: Union[str, MethodChoice], spec: Optional[TestSpecification]
) -> Tuple[List[str], Optional[AnalysisPlan]]:
    """The analyses to run. `auto` looks the specification up in the purpose/analysis table:
    a preliminary purpose wins over the test case's purpose of investigation."""
    choice = MethodChoice(choice)
    if choice != MethodChoice.AUTO:
        return [choice.value], None
    if spec is None:
        raise AnalysisError("--method auto needs the test specification")
    if spec.preliminary_purpose == PreliminaryPurpose.SCREENING:
        plan = recommend_analysis(screening=True)
    elif spec.preliminary_purpose == PreliminaryPurpose.NONLINEARITY_CHECK:
        plan = recommend_analysis(nonlinearity_check=True)
    else:
        plan = recommend_analysis(poi=spec.test_case.purpose_of_investigation)
    logger.info("Table row %r selects %s", plan.row, [m.value for m in plan.methods])
    return [method.value for method in plan.methods], plan


def _main_effect_row(table: AnovaTable, factor: str):
    for row in table.term_rows:
        if row.term in (factor, f"grp({factor})"):
            return row
    return None


def _level_key(level: Any) -> str:
    return format_real(level) if isinstance(level, float) else str(level)


def screening_verdicts(
    dataset: Dataset, table: AnovaTable, factors: Sequence[str], minimize: bool = True
) -> List[FactorVerdict]:
    """Keep, drop or block each factor, judged by its main effect.

    A factor whose main effect is not significant is negligible. A significant categorical
    factor is blocked at its best level (lowest mean response when `minimize`). A significant
    numeric factor is retained; when one end level alone accounts for at least half of the
    spread of the level means, that level is dropped from the range.
    """
    verdicts = []
    sign = 1.0 if minimize else -1.0
    for factor in factors:
        row = _main_effect_row(table, factor)
        levels = dataset.observed_levels(factor)
        column = dataset.column(factor)
        means = {
            level: float(np.mean(dataset.response[np.array([v == level for v in column])]))
            for level in levels
        }
        level_means = {_level_key(level): mean for level, mean in means.items()}
        p_value = row.p_value if row is not None else None
        if p_value is None or p_value >= table.alpha:
            verdicts.append(FactorVerdict(factor, Decision.DROP, p_value, level_means))
            continue
        if dataset.is_categorical(factor):
            best = min(levels, key=lambda level: (sign * means[level], str(level)))
            verdicts.append(
                FactorVerdict(factor, Decision.BLOCK, p_value, level_means, block_level=best)
            )
            continue
        restricted = None
        if len(levels) >= 3:
            ranked = sorted(levels, key=lambda level: sign * means[level])
            worst, second = ranked[-1], ranked[-2]
            spread = sign * (means[worst] - means[ranked[0]])
            if worst in (levels[0], levels[-1]) and spread > 0:
                if sign * (means[worst] - means[second]) >= RESTRICT_SHARE * spread:
                    kept = [level for level in levels if level != worst]
                    restricted = (float(kept[0]), float(kept[-1]))
        verdicts.append(
            FactorVerdict(
                factor, Decision.RETAIN, p_value, level_means, restricted_range=restricted
            )
        )
    return verdicts


def _regression_terms(dataset: Dataset, factors: Sequence[str]) -> List[ModelTerm]:
    """The default regression model, shrunk to main effects when the runs cannot support it."""
    terms = default_terms(dataset, AnalysisMethod.REGRESSION, factors)
    if build_model_matrix(dataset, terms).shape[1] < dataset.n:
        return terms
    return [ModelTerm.main(name) for name in factors]


def analyze_results(
    results: ResultSet,
    spec: Optional[TestSpecification] = None,
    method: Union[str, MethodChoice] = MethodChoice.AUTO,
    alpha: float = 0.05,
    metrics: Optional[Sequence[str]] = None,
    terms: Optional[Sequence[str]] = None,
    covariates: Optional[Sequence[str]] = None,
    treatment: Optional[str] = None,
    power_check: bool = True,
    seed: int = 0,
    spec_digest: Optional[str] = None,
) -> AnalysisReport:
    """Analyses every metric of `results` with the methods `method` resolves to.

    # Parameters

    results : `ResultSet`
    spec : `TestSpecification`, optional (default = `None`)
        Supplies factor ranges, level order, roles and the purpose of investigation.
    method : `Union[str, MethodChoice]`, optional (default = `"auto"`)
    alpha : `float`, optional (default = `0.05`)
    metrics : `Sequence[str]`, optional (default = `None`)
        All metrics of the results by default.
    terms : `Sequence[str]`, optional (default = `None`)
        Model terms such as `"A"`, `"A:B"`, `"A^2"`, `"grp(A)"`; chosen per method by default.
    covariates : `Sequence[str]`, optional (default = `None`)
        ANCOVA covariates; the known uncontrollable nuisance factors by default.
    treatment : `str`, optional (default = `None`)
        ANCOVA treatment; the first treatment factor by default.
    power_check : `bool`, optional (default = `True`)
        Estimate, for every numeric treatment factor the ANOVA did not find significant, the
        power to detect its observed effect.
    seed : `int`, optional (default = `0`)
        Seed of the power simulations.
    spec_digest : `str`, optional (default = `None`)
    """
    methods, plan = resolve_methods(method, spec)
    factors = list(spec.factors) if spec is not None else None
    roles = {factor.name: factor.role for factor in factors or []}
    factor_names = list(results.factor_names)
    treatments = [
        name
        for name in factor_names
        if roles.get(name, FactorRole.TREATMENT_EXPERIMENTAL).is_treatment
    ]
    model_terms = parse_terms(terms) if terms else None

    analyses = []
    for metric in metrics or results.metric_names:
        dataset = Dataset.from_results(results, metric, factors)
        analysis = MetricAnalysis(metric, dataset.n, dataset.n_excluded)
        if "regression" in methods:
            regression_terms = model_terms or _regression_terms(dataset, treatments)
            analysis.regression = regression(dataset, regression_terms)
            powers = [term for term in regression_terms if term.kind == TermKind.POWER]
            if powers:
                reduced = [term for term in regression_terms if term.kind != TermKind.POWER]
                analysis.comparison = compare_models(reduced, regression_terms, dataset, alpha)
        if "anova" in methods:
            anova_terms = model_terms or default_terms(
                dataset, AnalysisMethod.ANOVA, factor_names
            )
            analysis.anova = anova(dataset, anova_terms, alpha)
        if "ancova" in methods:
            analysis.anova = _ancova(dataset, roles, treatments, treatment, covariates, alpha)
        if analysis.anova is not None:
            analysis.notes.extend(analysis.anova.notes)
            analysis.screening = screen_rank(analysis.anova, alpha)
            if "ancova" not in methods:
                analysis.verdicts = screening_verdicts(dataset, analysis.anova, factor_names)
            if power_check:
                analysis.followups = _followups(dataset, analysis, treatments, alpha, seed)
        elif dataset.n_excluded:
            analysis.notes.append(f"{dataset.n_excluded} failed runs excluded")
        analyses.append(analysis)

    return AnalysisReport(
        methods=methods,
        alpha=alpha,
        recommendation=plan,
        digests={
            "spec_digest": spec_digest,
            "plan_digest": results.plan_digest,
            "results_digest": results.responses_digest(),
        },
        status_counts=results.status_counts(),
        metrics=analyses,
    )


def _ancova(
    dataset: Dataset,
    roles: Dict[str, FactorRole],
    treatments: Sequence[str],
    treatment: Optional[str],
    covariates: Optional[Sequence[str]],
    alpha: float,
) -> AnovaTable:
    if covariates is None:
        covariates = [
            name
            for name, role in roles.items()
            if role == FactorRole.NUISANCE_KNOWN_UNCONTROLLABLE and name in dataset.columns
        ]
    if treatment is None:
        if not treatments:
            raise AnalysisError("ANCOVA needs a treatment factor")
        treatment = treatments[0]
    return ancova(dataset, treatment, covariates, alpha)


def _followups(
    dataset: Dataset,
    analysis: MetricAnalysis,
    treatments: Sequence[str],
    alpha: float,
    seed: int,
) -> List[PowerFollowup]:
    numeric = [name for name in treatments if not dataset.is_categorical(name)]
    if len(numeric) == 0 or dataset.n <= len(numeric) + 2:
        return []
    followups = []
    for verdict in analysis.verdicts:
        if verdict.decision != Decision.DROP or verdict.factor not in numeric:
            continue
        if len(dataset.observed_levels(verdict.factor)) < 2:
            continue
        followup = low_power_followup(dataset, verdict.factor, numeric, alpha=alpha, seed=seed)
        if followup is not None:
            followups.append(followup)
    return followups


def _format_optional(value: Optional[float], spec: str = ".4g") -> str:
    if value is None:
        return "-"
    return format(value, spec)


def _anova_lines(table: AnovaTable) -> List[str]:
    width = max([len(row.term) for row in table.rows] + [4])
    lines = [
        f"{'Term':<{width}}  {'SS':>12}  {'df':>4}  {'MS':>12}  {'F':>10}  {'p':>10}",
    ]
    for row in table.rows:
        lines.append(
            f"{row.term:<{width}}  {row.sum_of_squares:>12.6g}  {row.df:>4d}  "
            f"{row.mean_square:>12.6g}  {_format_optional(row.f_statistic):>10}  "
            f"{_format_optional(row.p_value):>10}"
        )
    return lines


def _regression_lines(result: RegressionResult) -> List[str]:
    width = max([len(term) for term in result.terms] + [4])
    lines = [f"{'Term':<{width}}  {'Estimate':>12}  {'Std. error':>12}  {'t':>10}  {'p':>10}"]
    for i, term in enumerate(result.terms):
        lines.append(
            f"{term:<{width}}  {result.coefficients[i]:>12.6g}  "
            f"{result.standard_errors[i]:>12.6g}  {result.t_statistics[i]:>10.4g}  "
            f"{result.p_values[i]:>10.4g}"
        )
    lines.append(
        f"R^2 = {result.r_squared:.4f}, adjusted R^2 = {result.adjusted_r_squared:.4f}, "
        f"n = {result.n}, residual df = {result.df_residual}"
    )
    return lines


def render_text(report: AnalysisReport) -> str:
    """The plain-text form of a report."""
    lines = [f"Analysis report (doeflow {__version__})", ""]
    if report.recommendation is not None:
        lines.append(
            f"Purpose/analysis table row: {report.recommendation.row} -> "
            f"{', '.join(m.value for m in report.recommendation.methods)} "
            f"({report.recommendation.note})"
        )
    lines.append(f"Methods: {', '.join(report.methods)}; alpha = {report.alpha}")
    for key in sorted(report.digests):
        lines.append(f"{key}: {report.digests[key] or '-'}")
    counts = ", ".join(f"{status} {count}" for status, count in report.status_counts.items())
    lines.append(f"Runs: {counts}")
    for analysis in report.metrics:
        lines.extend(["", f"== {analysis.metric} ({analysis.n_runs} runs) =="])
        if analysis.regression is not None:
            lines.extend(["", "Regression"] + _regression_lines(analysis.regression))
        if analysis.comparison is not None:
            comparison = analysis.comparison
            lines.extend(
                [
                    "",
                    f"Model comparison: F({comparison.df_numerator}, {comparison.df_denominator})"
                    f" = {comparison.f_statistic:.4g}, p = {comparison.p_value:.4g}, "
                    f"preferred: {comparison.preferred}",
                ]
            )
        if analysis.anova is not None:
            lines.extend(["", "ANOVA (sequential sums of squares)"] + _anova_lines(analysis.anova))
        if analysis.screening:
            lines.extend(["", "Screening ranking"])
            for rank, entry in enumerate(analysis.screening, start=1):
                flag = "significant" if entry.significant else "negligible"
                lines.append(f"{rank:>3}. {entry.term}  p = {entry.p_value:.4g}  ({flag})")
        if analysis.verdicts:
            lines.extend(["", "Factors"] + [f"  {v.describe()}" for v in analysis.verdicts])
        for followup in analysis.followups:
            estimate = followup.estimate
            line = (
                f"  {followup.factor}: power {estimate.power:.3f} +- {estimate.half_width_95:.3f}"
                f" to detect the observed effect {followup.observed_effect:.4g}"
            )
            if followup.underpowered:
                line += " (LOW POWER; " + (
                    f"{followup.suggested_replicates} replicates of the runs reach power "
                    f"{followup.target_power})"
                    if followup.suggested_replicates
                    else "no replicate count tried reaches the target power)"
                )
            lines.append(line)
        for note in analysis.notes:
            lines.append(f"  note: {note}")
    if report.conclusions:
        lines.extend(["", "Conclusions"] + [f"  - {line}" for line in report.conclusions])
    return "\n".join(lines) + "\n"


def write_report(
    report: AnalysisReport, directory: Union[str, Path], name: str = "analysis"
) -> Tuple[Path, Path]:
    """Writes `<name>.json` and `<name>.txt` into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / f"{name}.json"
    text_path = directory / f"{name}.txt"
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.render_text(), encoding="utf-8")
    return json_path, text_path
