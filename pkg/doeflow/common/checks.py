"""
Every error and warning the toolkit raises. Spec problems are `ConfigurationError`s (the
same family AllenNLP raises for bad `Params`), so a caller can catch configuration problems
in one place regardless of whether they came from a spec file or a design family's parameters.
"""
from typing import List, Optional

from allennlp.common.checks import ConfigurationError


# Spec model


class MalformedFile(ConfigurationError):
    """The file is missing, unreadable or not syntactically valid JSON."""


class UnknownKind(ConfigurationError):
    """The file declares a `kind` that is not one of the spec kinds."""


class SchemaViolation(ConfigurationError):
    """One or more schema invariants failed. Each entry of `violations` reads
    `"<field path>: <message>"`."""

    def __init__(self, violations: List[str], source: Optional[str] = None) -> None:
        self.violations = list(violations)
        self.source = source
        prefix = f"{source}: " if source else ""
        super().__init__(prefix + "; ".join(self.violations))


class AmbiguousPurpose(ConfigurationError):
    """An analysis recommendation was asked for with no purpose, or with more than one."""


# Design generation


class DesignError(ValueError):
    pass


class TooManyRuns(DesignError):
    pass


class TooManyFactors(DesignError):
    pass


class InvalidGenerator(DesignError):
    pass


class DegenerateDesign(DesignError):
    pass


class UnsupportedFamily(DesignError):
    pass


class InvalidAlpha(DesignError):
    pass


class KTooSmall(DesignError):
    pass


class DimensionUnsupported(DesignError):
    pass


class UnknownArray(DesignError):
    pass


class CardinalityMismatch(DesignError):
    pass


class RangeMissing(DesignError):
    pass


class WrongRole(DesignError):
    pass


# Analysis


class AnalysisError(ValueError):
    pass


class UnknownFactor(AnalysisError):
    pass


class EmptyResults(AnalysisError):
    pass


class RankDeficient(AnalysisError):
    def __init__(self, message: str, pairs: Optional[List[tuple]] = None) -> None:
        self.pairs = pairs or []
        super().__init__(message)


class NotTwoLevel(AnalysisError):
    pass


class NotNested(AnalysisError):
    pass


# Runner


class RunnerError(RuntimeError):
    pass


class RunnerSpawnFailure(RunnerError):
    pass


class HandshakeTimeout(RunnerError):
    pass


class ProtocolViolation(RunnerError):
    def __init__(self, message: str, line: Optional[str] = None) -> None:
        self.line = line
        if line is not None:
            message = f"{message} (offending line: {line!r})"
        super().__init__(message)


class RunTimeout(RunnerError):
    pass


class PlanDigestMismatch(RunnerError):
    pass


class CorruptResults(RunnerError):
    pass


# Advisory conditions, reported through `warnings.warn`.


class ConstantColumn(UserWarning):
    pass


class NoResidualDf(UserWarning):
    pass
