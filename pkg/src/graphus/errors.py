class GraphusError(Exception):
    """Base class for errors raised by graphus."""


class DatasetError(GraphusError, ValueError):
    """Malformed dataset directory or an out-of-range record."""


class InfeasibleParametersError(GraphusError, ValueError):
    """Generative-model parameters that cannot be realized (e.g. an edge probability > 1)."""


class EnumerationLimitError(GraphusError, RuntimeError):
    """Exact enumeration would exceed the configured term budget; use mean_field instead."""


class ConfigError(GraphusError, ValueError):
    """Experiment configuration does not match the documented schema."""
