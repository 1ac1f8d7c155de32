class LabError(Exception):
    """
    Base class of every error raised by the laboratory.

    Attributes:
        exit_code (int): The exit code `cli.py` reports for this error.
        diagnostics (dict): Extra values that locate the failure (written to the run manifest).
    """
    exit_code = 1

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class DomainError(LabError, ValueError):
    """A point, curve or field lies outside the chart box or the grid interior."""


class PreconditionError(LabError, ValueError):
    """An operation was called with inputs violating its precondition."""


class IntegrationError(LabError, ArithmeticError):
    """A bicharacteristic integration or a wave solve failed (step underflow, blow-up)."""


class ConfigurationError(LabError, ValueError):
    """An experiment, grid or source parameter cannot be realized."""
    exit_code = 2


class DependencyError(LabError, KeyError):
    """A lower-order cascade field required by a right-hand side is missing."""


class InfeasibleError(LabError, ValueError):
    """No earliest observation point exists for the requested point."""


class InternalError(LabError, RuntimeError):
    """A linear system that is regular by construction turned out singular."""
