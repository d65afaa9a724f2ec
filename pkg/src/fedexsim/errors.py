"""Exception types shared across the package."""


class FedexError(Exception):
    """Base class for all package errors."""


class ShapeError(FedexError, ValueError):
    """Tensor or model shapes are incompatible."""


class DomainError(FedexError, ValueError):
    """Input value outside the operation's domain (empty vector, bad probability)."""


class StateError(FedexError, RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class ConfigError(FedexError, ValueError):
    """Invalid configuration value."""


class SpecError(FedexError, ValueError):
    """Inconsistent architecture specification."""


class FormatError(FedexError, ValueError):
    """Malformed serialized payload (weights file, dataset file, IDX)."""


class AggregationError(FedexError, ValueError):
    """Client updates cannot be aggregated (mismatched specs)."""


class BudgetExceededError(FedexError, RuntimeError):
    """The query ledger has no budget left for the request."""
