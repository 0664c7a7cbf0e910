class MipsError(Exception):
    """Base class for package errors."""


class ConfigError(MipsError, ValueError):
    """Invalid configuration or input document."""


class ContractError(MipsError, RuntimeError):
    """An operation was called with inputs that violate its preconditions."""


class PlacementError(MipsError):
    """A placement scheme could not produce a feasible mapping.

    ``partial`` holds whatever mapping was built before the failure.
    """

    def __init__(self, message, partial=None, stage=None):
        super().__init__(message)
        self.partial = dict(partial or {})
        self.stage = stage


class TopologyError(MipsError, ValueError):
    """Network construction or shortest-path failure."""


class OracleRefused(MipsError):
    """Brute-force enumeration would exceed the configured size cap."""
