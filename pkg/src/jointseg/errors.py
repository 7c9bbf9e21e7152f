"""Exception hierarchy shared across the package."""


class JointsegError(Exception):
    """Base class for all package errors."""


class FormatError(JointsegError):
    """File is not a readable volume of the supported format."""


class ValidationError(JointsegError):
    """Input violates a documented invariant (shape, value set, simplex...)."""


class DegenerateInputError(JointsegError):
    """Input is as constant/empty in a way that makes the operation undefined."""


class GenerationError(JointsegError):
    """Phantom generation could not satisfy its constraints."""


class EstimationError(JointsegError):
    """Iterative estimation failed to converge to an acceptable optimum."""


class NotUnilateralError(JointsegError):
    """Lesion is bilateral; hemisphere mirroring is not applicable."""


class ConfigError(JointsegError):
    """Invalid configuration or dataset wiring."""


class ConflictError(JointsegError):
    """Operation conflicts with the current state (e.g. closed session)."""


class PropertyCheckFailure(JointsegError):
    """A property-check suite found a counterexample."""
