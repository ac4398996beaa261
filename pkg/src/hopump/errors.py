"""Exception types. The CLI maps these onto exit codes."""


class PumpError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PumpError, ValueError):
    """Invalid configuration or lattice parameters."""


class DomainError(PumpError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UsageError(PumpError, ValueError):
    """Operation called in an inconsistent state (e.g. flux without corner links)."""


class NumericalError(PumpError, RuntimeError):
    """A numerical kernel failed to converge or a diagnostic threshold was violated."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class BudgetExceeded(PumpError, RuntimeError):
    """Wall-clock budget exhausted."""
