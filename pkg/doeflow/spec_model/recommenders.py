"""
Decision support for the three choices a test designer makes: which analysis serves the purpose
of investigation, which family of design fits the treatment budget, and how to handle each
nuisance factor. All recommendations are advice; nothing here blocks an explicit choice.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from doeflow.common.checks import AmbiguousPurpose
from doeflow.spec_model.schema import DesignFamily, FactorRole, PurposeOfInvestigation


class AnalysisMethod(str, Enum):
    ANOVA = "anova"
    REGRESSION = "regression"


class DesignCategory(str, Enum):
    CLASSICAL = "classical"
    MODERN = "modern"


class HandlingConcept(str, Enum):
    RANDOMIZATION = "randomization"
    BLOCKING = "blocking"
    ANCOVA = "ancova"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class AnalysisPlan:
    methods: Tuple[AnalysisMethod, ...]
    note: str
    # Which row of the purpose/analysis table fired.
    row: str


@dataclass(frozen=True)
class DesignRecommendation:
    category: DesignCategory
    suggested_families: Tuple[DesignFamily, ...]
    rationale: str
    infeasible_budget: bool = False


GUIDELINE_NOTE = "Analysis tools are guideline suggestions"

_SCREENING = AnalysisPlan((AnalysisMethod.ANOVA,), "Many factors, few levels", "Screening (SA)")
_NONLINEARITY = AnalysisPlan(
    (AnalysisMethod.REGRESSION,), "Few factors, many levels", "Nonlinearity checking"
)
_BY_PURPOSE = {
    PurposeOfInvestigation.CHARACTERIZATION: AnalysisPlan(
        (AnalysisMethod.REGRESSION,),
        f"Description model (regression). {GUIDELINE_NOTE}",
        "Characterization",
    ),
    PurposeOfInvestigation.VALIDATION: AnalysisPlan(
        (AnalysisMethod.REGRESSION, AnalysisMethod.ANOVA),
        f"Regression + ANOVA. {GUIDELINE_NOTE}",
        "Validation",
    ),
    PurposeOfInvestigation.VERIFICATION: AnalysisPlan(
        (AnalysisMethod.ANOVA,), f"ANOVA. {GUIDELINE_NOTE}", "Verification"
    ),
}

_NUISANCE_HANDLING = {
    FactorRole.NUISANCE_UNKNOWN: HandlingConcept.RANDOMIZATION,
    FactorRole.NUISANCE_KNOWN_CONTROLLABLE: HandlingConcept.BLOCKING,
    FactorRole.NUISANCE_KNOWN_UNCONTROLLABLE: HandlingConcept.ANCOVA,
}


def recommend_analysis(
    poi: Optional[PurposeOfInvestigation] = None,
    screening: bool = False,
    nonlinearity_check: bool = False,
) -> AnalysisPlan:
    """Maps a purpose of investigation, or one of the two preliminary purposes, to the analysis
    methods that serve it. Exactly one of `poi`, `screening` and `nonlinearity_check` must be
    selected; there is no mapping for mixed preliminary purposes.

    # Raises

    `AmbiguousPurpose` if no mode or more than one mode is selected.
    """
    selected = sum([poi is not None, bool(screening), bool(nonlinearity_check)])
    if selected != 1:
        raise AmbiguousPurpose(
            "Select exactly one of a purpose of investigation, screening or nonlinearity check, "
            f"got {selected}"
        )
    if screening:
        return _SCREENING
    if nonlinearity_check:
        return _NONLINEARITY
    return _BY_PURPOSE[PurposeOfInvestigation(poi)]


def recommend_design(
    n_factors: int, max_treatments: int, fluctuations_expected: bool, nonlinear_expected: bool
) -> DesignRecommendation:
    """Suggests a design category and families for a treatment budget.

    A budget is "small" when `max_treatments <= 2 * (n_factors + 1)`. Classical designs are
    recommended for small budgets or when fluctuations are expected; modern space-filling
    designs when the budget is large and nonlinear behaviour is expected. A budget below
    `n_factors + 1` cannot estimate the main effects and is returned flagged, with the
    smallest classical screening design as the only suggestion.
    """
    if n_factors < 1:
        raise ValueError(f"n_factors must be >= 1, got {n_factors}")
    if max_treatments < 2:
        raise ValueError(f"max_treatments must be >= 2, got {max_treatments}")

    full_size = 2 ** n_factors
    small = max_treatments <= 2 * (n_factors + 1)
    ccd_size = full_size + 2 * n_factors + 1
    bb_size = 4 * (n_factors * (n_factors - 1) // 2) + 1

    if max_treatments < n_factors + 1:
        return DesignRecommendation(
            category=DesignCategory.CLASSICAL,
            suggested_families=(DesignFamily.PLACKETT_BURMAN,),
            rationale=(
                f"Infeasible budget: {max_treatments} treatments cannot estimate the "
                f"{n_factors} main effects plus the mean (at least {n_factors + 1} needed). "
                "Increase the budget or drop factors; Plackett-Burman is the smallest screening "
                "design."
            ),
            infeasible_budget=True,
        )

    if not fluctuations_expected and not small and nonlinear_expected:
        return DesignRecommendation(
            category=DesignCategory.MODERN,
            suggested_families=(
                DesignFamily.LATIN_HYPERCUBE,
                DesignFamily.SOBOL,
                DesignFamily.MONTE_CARLO,
                DesignFamily.ORTHOGONAL_ARRAY,
            ),
            rationale=(
                f"Modern designs: large number of treatments ({max_treatments} > "
                f"{2 * (n_factors + 1)}), fluctuations mostly neglected, space-filling designs "
                "suit the expected nonlinear behaviour."
            ),
        )

    reasons = []
    if small:
        reasons.append(
            f"small number of treatments ({max_treatments} <= {2 * (n_factors + 1)})"
        )
    if fluctuations_expected:
        reasons.append("focus on fluctuations")
    if not nonlinear_expected:
        reasons.append("linear behaviour assumed (two-level designs)")

    families = []
    if full_size <= max_treatments:
        families.append(DesignFamily.FULL_FACTORIAL)
        if nonlinear_expected:
            if n_factors >= 2 and ccd_size <= max_treatments:
                families.append(DesignFamily.CENTRAL_COMPOSITE)
            if n_factors >= 3 and bb_size <= max_treatments:
                families.append(DesignFamily.BOX_BEHNKEN)
        families.append(DesignFamily.FRACTIONAL_FACTORIAL)
    else:
        families.extend([DesignFamily.PLACKETT_BURMAN, DesignFamily.FRACTIONAL_FACTORIAL])
        if nonlinear_expected:
            if n_factors >= 3 and bb_size <= max_treatments:
                families.append(DesignFamily.BOX_BEHNKEN)
            if n_factors >= 2 and ccd_size <= max_treatments:
                families.append(DesignFamily.CENTRAL_COMPOSITE)
    if not reasons:
        reasons.append("trade-off between number of factors and number of levels")
    rationale = (
        "Classical designs: "
        + ", ".join(reasons)
        + f". A two-level full factorial needs {full_size} treatments"
        + (" and fits the budget." if full_size <= max_treatments else ", over the budget.")
    )
    return DesignRecommendation(
        category=DesignCategory.CLASSICAL, suggested_families=tuple(families), rationale=rationale
    )


def recommend_nuisance_handling(role: FactorRole) -> HandlingConcept:
    """Randomization for unknown, blocking for known controllable and ANCOVA for known
    uncontrollable nuisance factors. Treatment factors need no handling."""
    return _NUISANCE_HANDLING.get(FactorRole(role), HandlingConcept.NOT_APPLICABLE)
