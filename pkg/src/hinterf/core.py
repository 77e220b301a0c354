"""Physical constants, beam parameters and the dimensionless coordinate x = k0*z.

Everything downstream works in x. Conversions to and from lengths happen only
at the I/O boundary (config parsing and dataset export).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

C_LIGHT = 299_792_458.0  # m/s

# 2S1/2(F=0) - 2P1/2(F=1) interval and 2P lifetime
NU0_DEFAULT = 909.89e6  # Hz
TAU_DEFAULT = 1.5962e-9  # s


class ValidationError(ValueError):
    """Raised when physical inputs violate their invariants."""


@dataclass(frozen=True)
class BeamParameters:
    """Monochromatic atomic beam.

    Parameters
    ----------
    v_a : float
        Atom speed in m/s.
    nu0 : float
        Transition frequency in Hz.
    tau : float
        2P lifetime in s.
    """

    v_a: float
    nu0: float = NU0_DEFAULT
    tau: float = TAU_DEFAULT

    def __post_init__(self):
        for name in ("v_a", "nu0", "tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value!r}")
        ratio = self.v_a / C_LIGHT
        if ratio > 0.02:
            raise ValidationError(
                f"v_a/c = {ratio:.3g} exceeds 0.02; nonrelativistic z = v_a*t no longer holds"
            )
        if ratio > 0.01:
            warnings.warn(f"v_a/c = {ratio:.3g} is above 0.01", stacklevel=2)

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.nu0


@dataclass(frozen=True)
class DimensionlessConstants:
    """k0 (1/m), damping ratio beta, and 2P range R (m)."""

    k0: float
    beta: float
    R: float

    @property
    def range_dimensionless(self) -> float:
        """2P range in units of 1/k0; equals 1/(2*beta)."""
        return self.k0 * self.R


@dataclass
class AmplitudePair:
    """Complex 2S and 2P state amplitudes at one point."""

    a_s: complex
    a_p: complex

    @property
    def norm(self) -> float:
        return abs(self.a_s) ** 2 + abs(self.a_p) ** 2


def derive_constants(beam: BeamParameters) -> DimensionlessConstants:
    omega0 = beam.omega0
    return DimensionlessConstants(
        k0=omega0 / beam.v_a,
        beta=1.0 / (2.0 * omega0 * beam.tau),
        R=beam.tau * beam.v_a,
    )


def to_dimensionless(z, c: DimensionlessConstants):
    """Length in metres -> x. Works on scalars and arrays."""
    return z * c.k0


def from_dimensionless(x, c: DimensionlessConstants):
    return x / c.k0
