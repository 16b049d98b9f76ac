"""Exception types shared across the package."""


class SwarmError(Exception):
    """Base class for all package-specific errors."""


class ZeroVelocityParticle(SwarmError):
    """A particle has exactly zero velocity (unstable equilibrium, unsupported)."""


class BadKernelParams(SwarmError):
    """Kernel parameters out of range (nonpositive scales etc.)."""


class FlowBlowup(SwarmError):
    """Backward relaxation flow requested past its finite blow-up time."""


class BadBand(SwarmError):
    """Speed-band ordering violated (expects 0 < lo < r < hi, or lo <= hi)."""


class UnsupportedPsi(SwarmError):
    """Test function support touches the origin or the equilibrium sphere."""


class ZeroVelocity(SwarmError):
    """Operation undefined at v = 0."""


class PoleSingularity(SwarmError):
    """Spherical-coordinate operation evaluated too close to a pole."""


class TooLarge(SwarmError):
    """Problem size exceeds the exact-solver cap; subsample instead."""


class DimensionMismatch(SwarmError):
    """Operands live in different phase-space dimensions."""


class MissingSnapshot(SwarmError):
    """Requested time is not stored in the trajectory."""


class ParseError(SwarmError):
    """Run configuration text could not be parsed."""


class ValidationError(SwarmError):
    """Run configuration parsed but violates an invariant."""
