"""Physical constants (SI) used throughout the package."""

from scipy import constants as _c

HBAR = _c.hbar
K_B = _c.k
#: Magnetic flux quantum h / 2e in webers.
PHI0 = _c.h / (2 * _c.e)
#: Reduced flux quantum, so that the junction phase is flux / PHI0_RED.
PHI0_RED = PHI0 / (2 * _c.pi)


def josephson_inductance(ic):
    """Small-signal inductance Φ0 / (2π Ic) of an unbiased junction."""
    return PHI0_RED / ic
