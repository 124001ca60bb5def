class SparsimError(Exception):
    """Base class for all errors raised by sparsim."""


class DimensionError(SparsimError, ValueError):
    pass


class ConfigurationError(SparsimError, ValueError):
    pass


class ProtocolError(SparsimError, RuntimeError):
    """A collective or leader-only routine was invoked by the wrong worker."""


class DivergenceError(SparsimError, FloatingPointError):
    """Non-finite values showed up in gradients or the model during a run."""
