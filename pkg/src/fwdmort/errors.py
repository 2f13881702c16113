"""Exception hierarchy shared by all modules."""


class FwdMortError(Exception):
    """Base class for library errors."""


class ConfigError(FwdMortError, ValueError):
    """Malformed or inconsistent configuration."""


class DomainError(FwdMortError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class GridMismatchError(DomainError):
    """Surfaces or curves that must share a grid do not."""


class StaleRegionError(DomainError):
    """A request touches grid rows filled by the shift boundary policy."""


class DiagnosticFailure(FwdMortError):
    """A validation check did not pass."""
