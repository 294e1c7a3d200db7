"""Exception types shared across the package."""


class TorusFlowError(Exception):
    """Base class; `exit_code` is what the command line reports."""

    exit_code = 1


class InvalidArgument(TorusFlowError, ValueError):
    exit_code = 2


class ConfigError(TorusFlowError, ValueError):
    exit_code = 2


class InvalidSchedule(TorusFlowError, ValueError):
    exit_code = 2


class InfeasibleScale(TorusFlowError):
    exit_code = 3


class PrecisionError(TorusFlowError, ArithmeticError):
    exit_code = 4


class AliasingError(TorusFlowError, ValueError):
    exit_code = 2


class NonpositiveCeiling(TorusFlowError):
    exit_code = 5


class DegenerateError(TorusFlowError, ValueError):
    exit_code = 2
