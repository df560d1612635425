"""Exception hierarchy.

Every error raised by the library derives from :class:`OrbsusError`.  The two
CLI-facing families are :class:`ConfigError` (bad input, exit code 1) and
:class:`ComputeError` (numerical failure, exit code 2).
"""


class OrbsusError(Exception):
    """Base class for all library errors."""


class ConfigError(OrbsusError):
    """Invalid model description, configuration or argument."""


class ComputeError(OrbsusError):
    """A numerical routine could not produce a trustworthy value."""


# model construction
class NonHermitianConflict(ConfigError):
    pass


class RangeViolation(ConfigError):
    pass


class DegenerateLattice(ConfigError):
    pass


class NonPositiveGap(ConfigError):
    pass


class BadArity(ConfigError):
    pass


class TargetOutOfRange(ConfigError):
    pass


class NonIntegerFilling(ConfigError):
    pass


class NotTwoBand(ConfigError):
    pass


class SizeLimit(ConfigError):
    pass


class BoundaryProximity(ConfigError):
    pass


class OutsideStrip(ConfigError):
    pass


# numerical
class EigSolverFailure(ComputeError):
    pass


class OnSpectrum(ComputeError):
    pass


class DegenerateBand(ComputeError):
    pass


class DegenerateFallback(ComputeError):
    """Eigenvalues at a k-point collide; use the contour path there."""


class QuadratureNotConverged(ComputeError):
    pass


class ContourTouchesSpectrum(ComputeError):
    pass


class NotSemiconducting(ComputeError):
    pass


class SingularBasis(ComputeError):
    pass
