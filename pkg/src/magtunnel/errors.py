"""Exception hierarchy shared by all modules."""


class MagtunnelError(Exception):
    """Base class for library errors."""


class AdmissibilityError(MagtunnelError):
    """Parameters admit no real critical points (r0 * omega**2 / nu < 2)."""


class NotElliptic(MagtunnelError):
    """Fundamental matrix fails the strict ellipticity test.

    The offending spectrum is attached as ``spectrum`` so callers can still
    report it.
    """

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class NonConvergence(MagtunnelError):
    """An iterative solver exhausted its budget.

    ``partial`` carries whatever the solver had when it stopped.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NoConvergence(NonConvergence):
    """Eigensolver budget exhausted; ``partial`` holds a flagged result."""


class DegenerateMetric(MagtunnelError):
    """An interior path node fell into the region W < E'."""


class EndpointSingularity(MagtunnelError):
    """A regularized endpoint integral still diverges."""


class GaugeUnsupported(MagtunnelError):
    """Requested vector potential is not affine-linear."""


class SectorMismatch(MagtunnelError):
    """Operator does not commute with the y3 reflection."""


class UnderResolved(MagtunnelError):
    """Grid is too coarse for the requested semiclassical parameter."""


class SupportMismatch(MagtunnelError):
    """A quasi-mode vanishes on the stencil adjacent to the flux plane."""


class BoundaryLeak(MagtunnelError):
    """Propagated state carries too much mass near the box boundary."""


class SubspaceLeak(MagtunnelError):
    """Compressed propagator departs from unitarity."""


class SectionOutOfRange(MagtunnelError):
    """Requested momentum exceeds the grid Nyquist momentum."""


class ConfigError(MagtunnelError):
    """Missing or invalid configuration key.

    ``key`` holds the dotted key path.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class StageDependencyError(MagtunnelError):
    """A pipeline stage was requested before its prerequisites passed."""


class MissingStage(MagtunnelError):
    """Plot data requested for a stage that has no stored output."""


class OverflowRisk(RuntimeWarning):
    """Exponential weight was rescaled to avoid overflow."""
