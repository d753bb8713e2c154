"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable contract: 2 config, 3 geometry precondition, 4 solver failure,
5 certificate failure.
"""


class ConfimmError(Exception):
    exit_code = 1


class ConfigError(ConfimmError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# geometry preconditions (exit 3)

class GeometryError(ConfimmError):
    exit_code = 3


class InvalidMap(GeometryError):
    pass


class ShapeError(GeometryError):
    pass


class NotImmersion(GeometryError):
    pass


class NotInUpperHalfPlane(GeometryError):
    pass


class IllConditionedMetric(GeometryError):
    pass


class InvalidEuler(GeometryError):
    pass


class NotConformal(GeometryError):
    pass


# numerical solver failures (exit 4)

class SolverError(ConfimmError):
    exit_code = 4


class ModulusSolveFailed(SolverError):
    pass


class NegativeCoefficient(SolverError):
    pass


class AmplitudeDomain(SolverError):
    pass


class StageBudgetExceeded(SolverError):
    pass


class ShortnessLost(SolverError):
    pass


class MaxEvaluations(SolverError):
    pass


class MethodDisagreement(SolverError):
    pass


class NearSingularProjection(SolverError):
    pass


class QuadraticRelationViolated(SolverError):
    pass


# certificate failures (exit 5)

class CertificateError(ConfimmError):
    exit_code = 5


class GapTooSmall(CertificateError):
    pass


class NoCertificate(CertificateError):
    pass


class HypothesisViolated(CertificateError):
    pass


class ComponentJumpSuspected(CertificateError):
    def __init__(self, message, partial_path=None):
        super().__init__(message)
        self.partial_path = partial_path
