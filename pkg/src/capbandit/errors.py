"""Exception hierarchy shared by every capbandit module."""


class CapbanditError(Exception):
    """Base class for all errors raised by this package."""


# -- domain ------------------------------------------------------------------


class ProfileError(CapbanditError, ValueError):
    pass


class SumViolation(ProfileError):
    pass


class RangeViolation(ProfileError):
    pass


class NoConstrainedAgent(ProfileError):
    pass


class ParseError(CapbanditError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NonBinaryReward(ParseError):
    pass


class DimensionMismatch(CapbanditError, ValueError):
    pass


# -- models / queues / policies ------------------------------------------------


class CholeskyFailure(CapbanditError, ArithmeticError):
    pass


class InvalidAgent(CapbanditError, IndexError):
    pass


class CountMismatch(CapbanditError, ValueError):
    pass


class CapacityOutsideWindow(CapbanditError, ValueError):
    pass


class InfeasibleCounts(CapbanditError, ValueError):
    pass


# -- batch ---------------------------------------------------------------------


class ScoreOverflow(CapbanditError, OverflowError):
    pass


class NetworkMalformed(CapbanditError, ValueError):
    pass


class Infeasible(CapbanditError, RuntimeError):
    pass


# -- harness / cli -------------------------------------------------------------


class InvalidSpec(CapbanditError, ValueError):
    pass


class EmptyTable(CapbanditError, ValueError):
    pass


class ConfigError(CapbanditError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class CheckpointError(CapbanditError, ValueError):
    pass
