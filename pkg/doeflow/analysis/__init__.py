from doeflow.analysis.model_matrix import (
    Dataset,
    ModelMatrix,
    ModelTerm,
    TermKind,
    build_model_matrix,
    default_terms,
    parse_terms,
)
from doeflow.analysis.regression import (
    ModelComparison,
    RegressionResult,
    compare_models,
    ols_regression,
    regression,
)
from doeflow.analysis.anova import (
    AnovaRow,
    AnovaTable,
    ScreeningEntry,
    ancova,
    anova,
    effects_two_level,
    screen_rank,
)
from doeflow.analysis.power import PowerEstimate, PowerFollowup, low_power_followup, power_estimate
from doeflow.analysis.report import (
    AnalysisReport,
    Decision,
    FactorVerdict,
    MethodChoice,
    analyze_results,
    screening_verdicts,
    write_report,
)
from doeflow.common.stats_utils import f_pvalue
