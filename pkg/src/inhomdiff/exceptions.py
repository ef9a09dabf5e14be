"""Exception types raised by the solver suite."""


class InhomDiffError(Exception):
    """Base class for all errors raised by this package."""


class PacketTooWide(InhomDiffError, ValueError):
    """The initial wavepacket reaches too close to the domain edge."""


class NoStationaryDensity(InhomDiffError, ValueError):
    """The potential admits no normalizable stationary density (k == 0)."""


class SolveFailure(InhomDiffError, RuntimeError):
    """The implicit tridiagonal system could not be solved."""


class ZeroInitialGap(InhomDiffError, ValueError):
    """S(t) is undefined for a packet centred at zero."""


class SeriesTooShort(InhomDiffError, ValueError):
    """The series does not cover enough of the decay to be classified."""


class NonMonotoneBoundary(InhomDiffError, RuntimeError):
    """The relaxation label changes more than once across the search bracket."""


class ScheduleMismatch(InhomDiffError, ValueError):
    """Two series that should share record times do not."""


class ConfigError(InhomDiffError, ValueError):
    """A run configuration failed validation."""
