from doeflow.example_sut.model import (
    FACTOR_NAMES,
    METRIC_NAMES,
    LimitPriority,
    SutConfig,
    SutMetrics,
    SutTreatment,
    fault_currents,
    simulate,
)
