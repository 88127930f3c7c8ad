"""Exception hierarchy shared by the simulator and the CLI."""


class PointerSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(PointerSimError, ValueError):
    """Invalid parameters or experiment configuration."""


class ResourceLimitError(PointerSimError):
    """Requested size exceeds a configured representation limit."""


class ToleranceError(PointerSimError):
    """A numerical check did not reach its required tolerance."""
