class OscistripError(Exception):
    pass


class DomainError(OscistripError, ValueError):
    """Argument outside the domain where an operation is defined."""


class ConfigError(OscistripError, ValueError):
    pass


class NumericalError(OscistripError, RuntimeError):
    """A solver, quadrature or point-location step failed.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (iteration counts, residuals, offending node indices).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class MeshError(OscistripError, ValueError):
    pass


class DivergenceError(NumericalError):
    """Newton iteration failed to reach the tolerance."""


class NonHyperbolicError(NumericalError):
    """Linearization is (numerically) singular."""


class BranchEscapeError(NumericalError):
    """A continued equilibrium left the prescribed ball around its limit."""


class CountMismatchError(NumericalError):
    """Equilibrium sets to be matched have different sizes."""
