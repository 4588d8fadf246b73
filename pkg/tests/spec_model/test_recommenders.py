import pytest
from allennlp.common.checks import ConfigurationError
from hypothesis import given
from hypothesis.strategies import booleans, integers

from doeflow.common.checks import AmbiguousPurpose
from doeflow.spec_model.recommenders import (
    AnalysisMethod,
    DesignCategory,
    HandlingConcept,
    recommend_analysis,
    recommend_design,
    recommend_nuisance_handling,
)
from doeflow.spec_model.schema import DesignFamily, FactorRole, PurposeOfInvestigation


class TestRecommendAnalysis:
    @pytest.mark.parametrize(
        "poi, methods, row",
        [
            (
                PurposeOfInvestigation.CHARACTERIZATION,
                (AnalysisMethod.REGRESSION,),
                "Characterization",
            ),
            (
                PurposeOfInvestigation.VALIDATION,
                (AnalysisMethod.REGRESSION, AnalysisMethod.ANOVA),
                "Validation",
            ),
            (PurposeOfInvestigation.VERIFICATION, (AnalysisMethod.ANOVA,), "Verification"),
        ],
    )
    def test_purpose_of_investigation(self, poi, methods, row) -> None:
        plan = recommend_analysis(poi=poi)
        assert plan.methods == methods
        assert plan.row == row
        assert "guideline" in plan.note

    def test_accepts_plain_strings(self) -> None:
        assert recommend_analysis(poi="verification").row == "Verification"

    def test_screening(self) -> None:
        plan = recommend_analysis(screening=True)
        assert plan.methods == (AnalysisMethod.ANOVA,)
        assert plan.note == "Many factors, few levels"

    def test_nonlinearity_check(self) -> None:
        plan = recommend_analysis(nonlinearity_check=True)
        assert plan.methods == (AnalysisMethod.REGRESSION,)
        assert plan.note == "Few factors, many levels"

    def test_exactly_one_selection(self) -> None:
        with pytest.raises(AmbiguousPurpose):
            recommend_analysis()
        with pytest.raises(AmbiguousPurpose, match="got 2"):
            recommend_analysis(screening=True, nonlinearity_check=True)
        with pytest.raises(ConfigurationError):
            recommend_analysis(poi=PurposeOfInvestigation.VALIDATION, screening=True)


class TestRecommendDesign:
    def test_small_budget_with_fluctuations(self) -> None:
        advice = recommend_design(7, 12, True, False)
        assert advice.category == DesignCategory.CLASSICAL
        assert advice.suggested_families[0] == DesignFamily.PLACKETT_BURMAN
        assert not advice.infeasible_budget

    def test_large_budget_nonlinear(self) -> None:
        advice = recommend_design(5, 1000, False, True)
        assert advice.category == DesignCategory.MODERN
        assert DesignFamily.LATIN_HYPERCUBE in advice.suggested_families
        assert DesignFamily.SOBOL in advice.suggested_families

    def test_full_factorial_fits(self) -> None:
        advice = recommend_design(2, 4, False, False)
        assert advice.category == DesignCategory.CLASSICAL
        assert advice.suggested_families[0] == DesignFamily.FULL_FACTORIAL
        assert "fits the budget" in advice.rationale

    def test_infeasible_budget(self) -> None:
        advice = recommend_design(5, 4, False, False)
        assert advice.infeasible_budget
        assert advice.suggested_families == (DesignFamily.PLACKETT_BURMAN,)

    def test_fault_ride_through_case(self) -> None:
        # Three treatment factors, 30 treatments, fluctuations and nonlinearity expected.
        advice = recommend_design(3, 30, True, True)
        assert advice.category == DesignCategory.CLASSICAL
        assert DesignFamily.CENTRAL_COMPOSITE in advice.suggested_families
        assert DesignFamily.BOX_BEHNKEN in advice.suggested_families

    def test_invalid_arguments(self) -> None:
        with pytest.raises(ValueError):
            recommend_design(0, 10, False, False)
        with pytest.raises(ValueError):
            recommend_design(3, 1, False, False)

    @given(
        n=integers(min_value=1, max_value=20),
        budget=integers(min_value=2, max_value=10 ** 6),
        fluctuations=booleans(),
        nonlinear=booleans(),
    )
    def test_categories(self, n: int, budget: int, fluctuations: bool, nonlinear: bool) -> None:
        advice = recommend_design(n, budget, fluctuations, nonlinear)
        small = budget <= 2 * (n + 1)
        expected_modern = not fluctuations and not small and nonlinear
        assert (advice.category == DesignCategory.MODERN) == expected_modern
        assert advice.infeasible_budget == (budget < n + 1)
        assert advice.suggested_families
        assert advice.rationale


@pytest.mark.parametrize(
    "role, concept",
    [
        (FactorRole.NUISANCE_UNKNOWN, HandlingConcept.RANDOMIZATION),
        (FactorRole.NUISANCE_KNOWN_CONTROLLABLE, HandlingConcept.BLOCKING),
        (FactorRole.NUISANCE_KNOWN_UNCONTROLLABLE, HandlingConcept.ANCOVA),
        (FactorRole.TREATMENT_EXPERIMENTAL, HandlingConcept.NOT_APPLICABLE),
    ],
)
def test_recommend_nuisance_handling(role, concept) -> None:
    assert recommend_nuisance_handling(role) == concept
