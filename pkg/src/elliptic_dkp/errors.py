"""Exception hierarchy shared by every module of the package."""


class EllipticDKPError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidModularParam(EllipticDKPError, ValueError):
    """The modular parameter is not purely imaginary with positive imaginary part."""


class UnsupportedOrder(EllipticDKPError, ValueError):
    pass


class PoleProximity(EllipticDKPError, ValueError):
    """An argument was sampled too close to a zero of a theta function in a denominator."""


class BranchJump(EllipticDKPError):
    """Consecutive samples along a path moved the log argument by more than pi/2."""


class CollisionError(EllipticDKPError):
    """Two driving points (or a driving point and the origin) collided modulo the lattice."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class OrderExceeded(EllipticDKPError, ValueError):
    pass


class DegenerateDenominator(EllipticDKPError, ZeroDivisionError):
    pass


class NotEnoughAxes(EllipticDKPError, ValueError):
    pass


class SingularJacobian(EllipticDKPError):
    pass


class NoConvergence(EllipticDKPError):
    pass


class ConfigError(EllipticDKPError, ValueError):
    pass
