from doeflow.spec_model.schema import (
    Categorical,
    ContinuousRange,
    DesignAdvice,
    DesignFamily,
    DesignRequest,
    ExperimentDesign,
    ExperimentSpecification,
    Factor,
    FactorRole,
    PreliminaryPurpose,
    PurposeOfInvestigation,
    ResponseMetric,
    RunnerBinding,
    TestCase,
    TestSpecification,
)
from doeflow.spec_model.parsing import (
    check_unique_test_case_names,
    parse_spec,
    parse_spec_data,
    serialize_spec,
    write_spec,
)
from doeflow.spec_model.recommenders import (
    AnalysisMethod,
    AnalysisPlan,
    DesignCategory,
    DesignRecommendation,
    HandlingConcept,
    recommend_analysis,
    recommend_design,
    recommend_nuisance_handling,
)
