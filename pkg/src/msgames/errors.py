"""Exception types shared across the package."""


class MultiScaleError(Exception):
    """Base class for all package errors."""


class StructureError(MultiScaleError):
    """Reference to a level, group or agent that does not exist."""


class ContractError(MultiScaleError):
    """An operation was called outside its documented preconditions."""


class CertificateError(MultiScaleError):
    """Uniqueness certification cannot be carried out (e.g. degenerate diagonal)."""


class AssumptionViolation(MultiScaleError):
    """A linear equilibrium system is singular."""


class GameFileError(MultiScaleError):
    """A game or config file is malformed."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
