"""Exception hierarchy shared by the solver modules and the CLI."""


class MetastatError(Exception):
    """Base class for all library errors."""


class DomainError(MetastatError, ValueError):
    """Input outside the domain of an operation (negative time, NaN, off-boundary point...)."""


class ConfigError(MetastatError, ValueError):
    """Invalid model or run configuration."""


class NumericalError(MetastatError, RuntimeError):
    """An integrator or quadrature failed.

    ``state`` carries the last valid state when one is available.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SingularityError(NumericalError):
    """Point too close to the equilibrium X* for a pointwise evaluation."""


class StepSizeError(NumericalError):
    """Volterra march unstable for the requested step; halve the step."""


class SubcriticalError(MetastatError):
    """The spectral condition F(lambda_probe) > 1 is violated."""

    def __init__(self, message, f_probe=None):
        super().__init__(message)
        self.f_probe = f_probe
