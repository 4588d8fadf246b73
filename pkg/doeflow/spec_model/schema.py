from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

SPEC_VERSION = 1


class PurposeOfInvestigation(str, Enum):
    CHARACTERIZATION = "characterization"
    VALIDATION = "validation"
    VERIFICATION = "verification"


class PreliminaryPurpose(str, Enum):
    """Purpose of a preliminary experiment run ahead of the main one."""

    SCREENING = "screening"
    NONLINEARITY_CHECK = "nonlinearity_check"


class FactorRole(str, Enum):
    TREATMENT_EXPERIMENTAL = "treatment_experimental"
    TREATMENT_CLASSIFICATION = "treatment_classification"
    NUISANCE_UNKNOWN = "nuisance_unknown"
    NUISANCE_KNOWN_CONTROLLABLE = "nuisance_known_controllable"
    NUISANCE_KNOWN_UNCONTROLLABLE = "nuisance_known_uncontrollable"

    @property
    def is_treatment(self) -> bool:
        return self in (FactorRole.TREATMENT_EXPERIMENTAL, FactorRole.TREATMENT_CLASSIFICATION)

    @property
    def is_nuisance(self) -> bool:
        return not self.is_treatment


class DesignFamily(str, Enum):
    FULL_FACTORIAL = "full_factorial"
    FRACTIONAL_FACTORIAL = "fractional_factorial"
    PLACKETT_BURMAN = "plackett_burman"
    CENTRAL_COMPOSITE = "central_composite"
    BOX_BEHNKEN = "box_behnken"
    LATIN_HYPERCUBE = "latin_hypercube"
    SOBOL = "sobol"
    MONTE_CARLO = "monte_carlo"
    ORTHOGONAL_ARRAY = "orthogonal_array"

    @property
    def is_classical(self) -> bool:
        return self in CLASSICAL_FAMILIES


CLASSICAL_FAMILIES = (
    DesignFamily.FULL_FACTORIAL,
    DesignFamily.FRACTIONAL_FACTORIAL,
    DesignFamily.PLACKETT_BURMAN,
    DesignFamily.CENTRAL_COMPOSITE,
    DesignFamily.BOX_BEHNKEN,
)


@dataclass(frozen=True)
class ContinuousRange:
    low: float
    high: float
    unit: str = ""

    def contains(self, value: Any) -> bool:
        return (
            isinstance(value, (int, float))
            and not isinstance(value, bool)
            and self.low <= value <= self.high
        )


@dataclass(frozen=True)
class Categorical:
    labels: Tuple[str, ...]

    def contains(self, value: Any) -> bool:
        return isinstance(value, str) and value in self.labels


Domain = Union[ContinuousRange, Categorical]


@dataclass(frozen=True)
class Factor:
    """A named experiment input.

    # Parameters

    name : `str`
    role : `FactorRole`
        Treatment factors are under study; nuisance factors are handled by randomization,
        blocking or covariance analysis depending on whether they are known and controllable.
    domain : `Domain`
        Either a `ContinuousRange` or a `Categorical` label set.
    levels : `Tuple`, optional (default = `None`)
        Explicit levels. Reals for continuous factors, labels for categorical ones.
    """

    name: str
    role: FactorRole
    domain: Domain
    levels: Optional[Tuple[Any, ...]] = None

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.domain, Categorical)

    @property
    def is_treatment(self) -> bool:
        return self.role.is_treatment

    def level_values(self) -> Optional[List[Any]]:
        """Explicit levels if declared, the labels for categorical factors, else `None`."""
        if self.levels is not None:
            return list(self.levels)
        if isinstance(self.domain, Categorical):
            return list(self.domain.labels)
        return None

    def violations(self, path: str = "") -> List[str]:
        problems = []
        if not self.name:
            problems.append(f"{path}name: must be a non-empty identifier")
        if isinstance(self.domain, ContinuousRange):
            if not self.domain.low < self.domain.high:
                problems.append(
                    f"{path}domain: factor '{self.name}' needs low < high, "
                    f"got low={self.domain.low}, high={self.domain.high}"
                )
        elif len(set(self.domain.labels)) < 2:
            problems.append(
                f"{path}domain.labels: factor '{self.name}' needs at least 2 distinct labels"
            )
        if self.levels is not None:
            outside = [level for level in self.levels if not self.domain.contains(level)]
            if outside:
                problems.append(
                    f"{path}levels: factor '{self.name}' has levels outside its domain: {outside}"
                )
            if self.role.is_treatment and len(set(self.levels)) < 2:
                problems.append(
                    f"{path}levels: treatment factor '{self.name}' needs at least 2 levels"
                )
        return problems


@dataclass(frozen=True)
class ResponseMetric:
    name: str
    unit: str = ""
    description: str = ""


@dataclass(frozen=True)
class TestCase:
    __test__ = False
    name: str
    object_under_investigation: str
    system_under_test: str
    functions_under_test: Tuple[str, ...]
    purpose_of_investigation: PurposeOfInvestigation
    test_criteria: Tuple[str, ...]
    # Carried as opaque text.
    qualification_strategy: Optional[str] = None

    def violations(self, path: str = "") -> List[str]:
        problems = []
        if not self.name.strip():
            problems.append(f"{path}name: must be non-empty")
        if not self.test_criteria:
            problems.append(f"{path}test_criteria: at least one test criterion is required")
        return problems


@dataclass(frozen=True)
class DesignAdvice:
    """Asks for a `recommend_design` rationale to be printed alongside the generated design."""

    max_treatments: int
    fluctuations_expected: bool = False
    nonlinear_expected: bool = False


@dataclass(frozen=True)
class DesignRequest:
    """Which design family to generate, with the family's own parameters (generators,
    n_samples, n_center, alpha, array name, ...) passed through untouched. The parameters are
    checked for internal consistency when the generator is built from them."""

    family: DesignFamily
    parameters: Dict[str, Any] = field(default_factory=dict)
    block_factor: Optional[str] = None
    advice: Optional[DesignAdvice] = None


@dataclass(frozen=True)
class TestSpecification:
    __test__ = False
    test_case: TestCase
    test_system_configuration: str
    factors: Tuple[Factor, ...]
    responses: Tuple[ResponseMetric, ...]
    test_design: DesignRequest
    preliminary_purpose: Optional[PreliminaryPurpose] = None
    # Relative path the test case was loaded from, if it was given by reference.
    test_case_ref: Optional[str] = None

    def factor(self, name: str) -> Factor:
        for factor in self.factors:
            if factor.name == name:
                return factor
        raise KeyError(f"No factor named '{name}'")

    @property
    def treatment_factors(self) -> List[Factor]:
        return [factor for factor in self.factors if factor.is_treatment]

    @property
    def metric_names(self) -> List[str]:
        return [response.name for response in self.responses]

    def violations(self, path: str = "") -> List[str]:
        problems = []
        if not self.treatment_factors:
            problems.append(f"{path}factors: at least one treatment factor is required")
        if not self.responses:
            problems.append(f"{path}responses: at least one response is required")
        names = [factor.name for factor in self.factors]
        for i, name in enumerate(names):
            if name in names[:i]:
                problems.append(f"{path}factors.{i}.name: duplicate factor name '{name}'")
        metrics = self.metric_names
        for i, name in enumerate(metrics):
            if name in metrics[:i]:
                problems.append(f"{path}responses.{i}.name: duplicate response name '{name}'")
        block = self.test_design.block_factor
        if block is not None and block not in names:
            problems.append(f"{path}test_design.block_factor: unknown factor '{block}'")
        return problems


@dataclass(frozen=True)
class RunnerBinding:
    """How to start the experiment process. `{python}` in the command is replaced by the
    running interpreter."""

    command: Tuple[str, ...]
    environment: Dict[str, str] = field(default_factory=dict)
    timeout: float = 60.0
    fresh_process: bool = False


@dataclass(frozen=True)
class ExperimentDesign:
    """`design` optionally points at an exported run plan; when absent the plan is generated
    from the test specification's design request."""

    master_seed: int
    replicates: int = 1
    design: Optional[str] = None


@dataclass(frozen=True)
class ExperimentSpecification:
    test_specification: TestSpecification
    experiment_setup: RunnerBinding
    experiment_design: ExperimentDesign
    test_specification_ref: Optional[str] = None
    # Directory relative references are resolved against.
    base_dir: Optional[Path] = field(default=None, compare=False)

    def violations(self, path: str = "") -> List[str]:
        problems = []
        if self.experiment_design.replicates < 1:
            problems.append(f"{path}experiment_design.replicates: must be >= 1")
        if self.experiment_setup.timeout <= 0:
            problems.append(f"{path}experiment_setup.timeout: must be > 0")
        if not self.experiment_setup.command:
            problems.append(f"{path}experiment_setup.command: must be non-empty")
        return problems


Spec = Union[TestCase, TestSpecification, ExperimentSpecification]

KINDS = {
    "test_case": TestCase,
    "test_specification": TestSpecification,
    "experiment_specification": ExperimentSpecification,
}
