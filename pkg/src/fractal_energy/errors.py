"""Exception hierarchy.

Each family maps to one CLI exit code: validation errors exit 1, solver
failures exit 2, hypothesis violations exit 3.
"""


class FractalEnergyError(Exception):
    exit_code = 1


class ValidationError(FractalEnergyError):
    exit_code = 1


class SolverError(FractalEnergyError):
    exit_code = 2


class HypothesisViolation(FractalEnergyError):
    exit_code = 3


# fractal topology
class SpecFormatError(ValidationError):
    pass


class FixedPointViolation(ValidationError):
    pass


class BoundaryCollision(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class NonInjectiveMap(ValidationError):
    pass


class WordTooLong(ValidationError):
    pass


# energy forms
class NegativeCoefficient(ValidationError):
    pass


class ReducibleForm(ValidationError):
    pass


class BadExponent(ValidationError):
    pass


class RatioDivergence(ValidationError):
    pass


# solvers
class SolverDivergence(SolverError):
    pass


class ToleranceUnreached(SolverError):
    pass


class MonotonicityViolation(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class ConservationDrift(SolverError):
    pass


class InsufficientDepth(SolverError):
    pass


class MissingA2Metadata(HypothesisViolation):
    pass
