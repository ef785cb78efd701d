"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class SlagError(Exception):
    exit_code = 1


class ParameterError(SlagError, ValueError):
    exit_code = 2


class ConvergenceError(SlagError, RuntimeError):
    exit_code = 3


class ProjectionError(ConvergenceError):
    pass


class ChartDomainError(ConvergenceError):
    pass


class DegenerateError(ConvergenceError):
    pass


class VerificationError(SlagError):
    exit_code = 4
