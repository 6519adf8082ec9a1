"""Exception hierarchy; the CLI maps each class to an exit code."""


class IspcaError(Exception):
    exit_code = 1


class UsageError(IspcaError, ValueError):
    """Bad arguments or violated preconditions."""

    exit_code = 2


class DataError(IspcaError, ValueError):
    """Input data that cannot be used (ragged CSV, non-finite cells, zero variance)."""

    exit_code = 3


class NumericalError(IspcaError, ArithmeticError):
    """A solver failed to converge or hit a degenerate matrix."""

    exit_code = 4


class ConvergenceWarning(UserWarning):
    pass
