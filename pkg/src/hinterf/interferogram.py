"""Forward models: interferograms vs ell, voltage scans vs u, FCF-distorted curves.

``K`` is the single overall scale. It absorbs |S0|^2 exp(-2 beta x*), the 2S
beam intensity and the detection efficiency, so ``exact_intensity`` returns
K * |A_p|^2 * exp(2 beta x*) / |S0|^2 + b.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .core import ValidationError
from .perturbation import (
    ExperimentGeometry,
    FieldGeometry,
    Profile,
    ProfileSum,
    composite_profile,
)
from .solver import first_order_amplitude, kernel_integral


@dataclass
class PoissonNoise:
    seed: int
    exposure: float = 1.0

    def __post_init__(self):
        if not self.exposure > 0:
            raise ValidationError("exposure must be positive")

    def to_dict(self):
        return {"kind": "poisson", "seed": self.seed, "exposure": self.exposure}


@dataclass
class Interferogram:
    ell: np.ndarray
    counts: np.ndarray
    k_factor: float = 1.0
    background: float = 0.0
    noise: PoissonNoise | None = None
    expected: np.ndarray | None = None

    def __post_init__(self):
        self.ell = np.asarray(self.ell, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.ell.shape != self.counts.shape:
            raise ValidationError("ell and counts must have equal length")
        if np.any(self.counts < 0):
            raise ValidationError("counts must be non-negative")
        if np.any(np.diff(self.ell) <= 0):
            raise ValidationError("ell must be increasing")


@dataclass
class VoltageScan:
    u: np.ndarray
    counts: np.ndarray
    d: float
    x_star: float
    noise: PoissonNoise | None = None
    expected: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.u.shape != self.counts.shape:
            raise ValidationError("u and counts must have equal length")
        if np.unique(self.u).size < 3:
            raise ValidationError("a voltage scan needs at least 3 distinct u values")
        if np.any(self.counts < 0):
            raise ValidationError("counts must be non-negative")


@dataclass
class InterferogramParams:
    """Model parameters of the approximate interferogram."""

    K: float
    z10_mod: float
    z20_mod: float
    alpha10: float
    alpha20: float
    d0: float
    beta: float
    eps1: float = 0.0
    eps2: float = 0.0

    def standard_coefficients(self) -> tuple[float, float, float, float]:
        """(a10, a20, a30, a40) of the standard interferogram."""
        a10 = self.K * self.z10_mod**2 * math.exp(-2 * self.beta * self.d0)
        a20 = 2 * self.K * self.z10_mod * self.z20_mod * math.exp(-self.beta * self.d0)
        a30 = self.d0 + self.alpha10 - self.alpha20
        a40 = self.K * self.z20_mod**2
        return a10, a20, a30, a40

    def corrected_coefficients(self) -> np.ndarray:
        """a1..a8 of the corrected fit function that reproduce this model exactly."""
        a10, a20, a30, a40 = self.standard_coefficients()
        return np.array([a10, a20, a30, a40, self.eps1 * self.d0, self.eps1,
                         self.eps2 * self.d0, self.eps2])


# ---------------------------------------------------------------------------
# closed-form curve families


def standard_model_I0(a10, a20, a30, a40, beta, ell):
    ell = np.asarray(ell, dtype=float)
    return (a10 * np.exp(-2 * beta * ell) + a20 * np.exp(-beta * ell) * np.cos(ell + a30)
            + a40)


def corrected_model_I1(params: InterferogramParams, ell):
    """Interferogram with linear-in-d overlap corrections (first order in eps)."""
    p = params
    ell = np.asarray(ell, dtype=float)
    d = p.d0 + ell
    b = p.beta
    return p.K * (
        p.z10_mod**2 * math.exp(-2 * b * p.d0) * (1 + 2 * p.eps1 * d) * np.exp(-2 * b * ell)
        + 2 * p.z10_mod * p.z20_mod * math.exp(-b * p.d0) * (1 + (p.eps1 + p.eps2) * d)
        * np.exp(-b * ell) * np.cos(ell + p.d0 + p.alpha10 - p.alpha20)
        + p.z20_mod**2 * (1 + 2 * p.eps2 * d)
    )


def corrected_fit_function(a, beta, ell):
    """Eight-parameter corrected fit function, a = (a1, ..., a8)."""
    a1, a2, a3, a4, a5, a6, a7, a8 = a
    ell = np.asarray(ell, dtype=float)
    return (a1 * (1 + 2 * (a5 + a6 * ell)) * np.exp(-2 * beta * ell)
            + a2 * (1 + a5 + a7 + (a6 + a8) * ell) * np.exp(-beta * ell) * np.cos(ell + a3)
            + a4 * (1 + 2 * (a7 + a8 * ell)))


def legacy_model_F(a1, a2, a3, a4, a5, R, L):
    """Electrostatic-exciter fit function in lab units (L and R in the same unit)."""
    if a3 == 0:
        raise ValidationError("period a3 must be non-zero")
    if not R > 0:
        raise ValidationError("range R must be positive")
    L = np.asarray(L, dtype=float)
    return (a1 * np.exp(-L / R) + a2 * np.exp(-L / (2 * R)) * np.cos(2 * math.pi * L / a3 + a4)
            + a5)


def modulation(z10_mod: float, z20_mod: float, beta: float, d0: float) -> float:
    """Calculated percentage modulation a20/a10 = 2 |z20|/|z10| exp(beta d0)."""
    if not z10_mod > 0:
        raise ValidationError("|z10| must be positive")
    if z10_mod == z20_mod:
        return 2.0 * math.exp(beta * d0)
    return 2.0 * (z20_mod / z10_mod) * math.exp(beta * d0)


# ---------------------------------------------------------------------------
# exact (first-order) two-slit interferogram


def exact_intensity(p1: Profile, p2: Profile, geom: ExperimentGeometry, d: float, beta: float,
                    s0: complex = 1.0, p0: complex = 0.0, K: float = 1.0, b: float = 0.0,
                    extra: Profile | None = None) -> float:
    """Expected count rate at separation d, with no narrowness assumption."""
    if s0 == 0:
        raise ValidationError("S0 must be non-zero")
    phi = composite_profile(p1, p2, d)
    if extra is not None:
        phi = ProfileSum(phi.terms + (extra,))
    a_p = first_order_amplitude(phi, s0, p0, geom.x0(d), geom.x_star, beta)
    return K * abs(a_p) ** 2 * math.exp(2 * beta * geom.x_star) / abs(s0) ** 2 + b


def exact_interferogram(p1: Profile, p2: Profile, geom: ExperimentGeometry, beta: float,
                        s0: complex = 1.0, p0: complex = 0.0, K: float = 1.0,
                        b: float = 0.0) -> Interferogram:
    ell = np.asarray(geom.ell_grid, dtype=float)
    counts = np.array([exact_intensity(p1, p2, geom, geom.d0 + l, beta, s0, p0, K, b)
                       for l in ell])
    return Interferogram(ell, counts, K, b, expected=counts.copy())


# ---------------------------------------------------------------------------
# voltage scans


def zeta0(field_geom: FieldGeometry, geom: ExperimentGeometry, d: float, beta: float) -> complex:
    """Principal value of the applied-field integral over [xi0, x*]."""
    return kernel_integral(field_geom.gap_model.psi_profile(d), geom.xi0, geom.x_star, beta)


def zeta0_uniform(d, beta):
    """Closed-form zeta0 for the uniform gap (psi = 1/d on [-d, 0])."""
    d = np.asarray(d, dtype=float)
    k = beta - 1j
    return -np.expm1(-k * d) / (k * d)


def zeta0_mod2_uniform(d, beta):
    """[1 - 2 e^{-beta d} cos d + e^{-2 beta d}] / ((1 + beta^2) d^2).

    The numerator equals |1 - e^{-(beta - i) d}|^2 and is evaluated through expm1
    so that the d -> 0 limit keeps full precision.
    """
    d = np.asarray(d, dtype=float)
    num = np.abs(np.expm1(-(beta - 1j) * d)) ** 2
    return num / ((1 + beta**2) * d**2)


def g_function(d, beta: float, zeta0_mod2):
    """b0/b2 = |z|^2 G(d) for identical slits."""
    zeta0_mod2 = np.asarray(zeta0_mod2, dtype=float)
    if np.any(zeta0_mod2 <= 0):
        raise ValidationError("|zeta0|^2 must be positive (G has a pole at zero)")
    d = np.asarray(d, dtype=float)
    e = np.exp(-beta * d)
    out = (1 + 2 * e * np.cos(d) + e * e) / zeta0_mod2
    return out if out.ndim else float(out)


def voltage_scan_coeffs(z10: complex, z20: complex, zeta: complex, d: float, beta: float,
                        K: float) -> tuple[float, float, float]:
    """(b0, b1, b2) of I(u) = b0 + b1 u + b2 u^2 from principal values."""
    if not K > 0:
        raise ValidationError("K must be positive")
    m1, m2, me = abs(z10), abs(z20), abs(zeta)
    a1, a2, ae = np.angle(z10), np.angle(z20), np.angle(zeta)
    e = math.exp(-beta * d)
    b0 = K * (m1**2 * e * e + 2 * m1 * m2 * e * math.cos(d + a1 - a2) + m2**2)
    b1 = 2 * K * me * (m1 * e * math.cos(d + a1 - ae) + m2 * math.cos(a2 - ae))
    b2 = K * me**2
    return float(b0), float(b1), float(b2)


def simulate_voltage_scan(p1: Profile, p2: Profile, field_geom: FieldGeometry,
                          geom: ExperimentGeometry, d: float, u, beta: float,
                          s0: complex = 1.0, p0: complex = 0.0, K: float = 1.0,
                          b: float = 0.0) -> VoltageScan:
    """Count rate vs total dimensionless voltage u at fixed d, through the first-order amplitude."""
    psi_d = field_geom.gap_model.psi_profile(d)
    u = np.asarray(u, dtype=float)
    counts = np.array([exact_intensity(p1, p2, geom, d, beta, s0, p0, K, b,
                                       extra=psi_d.scaled(float(ui))) for ui in u])
    return VoltageScan(u, counts, d, geom.x_star, expected=counts.copy())


# ---------------------------------------------------------------------------
# charged-film (FCF) distortion


class Zeta0Table:
    """zeta0(d) tabulated on a d grid with cubic-spline interpolation.

    The table is refined until midpoint interpolation errors fall below ``tol``
    (relative to max |zeta0|). A monotone (PCHIP) interpolant is not used: it
    flattens every extremum of the oscillating real and imaginary parts and
    stalls near 1e-7.
    """

    def __init__(self, field_geom: FieldGeometry, geom: ExperimentGeometry, beta: float,
                 d_min: float, d_max: float, n: int = 64, tol: float = 1e-8,
                 max_points: int = 8193):
        self.fn = lambda d: zeta0(field_geom, geom, d, beta)
        grid = np.linspace(d_min, d_max, n)
        vals = np.array([self.fn(d) for d in grid])
        while True:
            self._build(grid, vals)
            mids = 0.5 * (grid[1:] + grid[:-1])
            exact = np.array([self.fn(d) for d in mids])
            err = np.max(np.abs(self(mids) - exact)) / np.max(np.abs(vals))
            if err <= tol or grid.size >= max_points:
                break
            grid = np.sort(np.concatenate([grid, mids]))
            merged = np.empty(grid.size, dtype=complex)
            merged[0::2], merged[1::2] = vals, exact
            vals = merged
        self.max_error = float(err)
        if err > tol:
            warnings.warn(f"zeta0 table error {err:.2g} above {tol:.2g} at {grid.size} points",
                          stacklevel=2)

    def _build(self, grid, vals):
        self.grid = grid
        self._spline = CubicSpline(grid, vals)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d < self.grid[0]) or np.any(d > self.grid[-1]):
            raise ValidationError("d outside tabulated zeta0 range")
        return self._spline(d)


@dataclass
class FcfModel:
    """Global charged-film field acting like an internal voltage u_i."""

    u_i: float
    zeta0_of_d: Callable[[float], complex] = field(repr=False)

    def alpha_e0(self, d: float) -> float:
        return float(np.angle(self.zeta0_of_d(d)))


def fcf_intensity(z10: complex, z20: complex, zeta: complex, d: float, beta: float,
                  u_i: float, K: float) -> float:
    """Interferogram point distorted by an internal voltage u_i at separation d."""
    m1, m2, me = abs(z10), abs(z20), abs(zeta)
    if m2 == 0:
        b0, b1, b2 = voltage_scan_coeffs(z10, z20, zeta, d, beta, K)
        return b0 + b1 * u_i + b2 * u_i**2
    a1, a2, ae = np.angle(z10), np.angle(z20), np.angle(zeta)
    theta = u_i * me / m2
    e = math.exp(-beta * d)
    return K * (
        m1**2 * e * e
        + 2 * m1 * m2 * e * (math.cos(d + a1 - a2) + theta * math.cos(d + a1 - ae))
        + m2**2 * (1 + 2 * theta * math.cos(a2 - ae) + theta**2)
    )


def fcf_distorted_interferogram(z10: complex, z20: complex, fcf: FcfModel,
                                geom: ExperimentGeometry, beta: float,
                                K: float = 1.0) -> Interferogram:
    d = geom.d_grid
    counts = np.array([fcf_intensity(z10, z20, fcf.zeta0_of_d(dk), dk, beta, fcf.u_i, K)
                       for dk in d])
    return Interferogram(np.asarray(geom.ell_grid), counts, K, 0.0, expected=counts.copy())


def theta_of_d(z20: complex, fcf: FcfModel, d):
    """Ratio of the internal-voltage perturbation to the second-slit perturbation."""
    return np.array([fcf.u_i * abs(fcf.zeta0_of_d(dk)) / abs(z20) for dk in np.atleast_1d(d)])


# ---------------------------------------------------------------------------
# counting noise


def synthesize(expected, noise: PoissonNoise | None = None) -> np.ndarray:
    """Expected counts, or Poisson draws with mean exposure * expected."""
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 0) or not np.all(np.isfinite(expected)):
        raise ValidationError("expected counts must be finite and non-negative")
    if noise is None:
        return expected.copy()
    rng = np.random.default_rng(noise.seed)
    return rng.poisson(noise.exposure * expected).astype(float)


def with_noise(data, noise: PoissonNoise | None):
    """Copy of an Interferogram/VoltageScan with counts redrawn from its expected values."""
    expected = data.expected if data.expected is not None else data.counts
    counts = synthesize(expected, noise)
    if isinstance(data, Interferogram):
        return Interferogram(data.ell, counts, data.k_factor, data.background, noise,
                             expected.copy())
    return VoltageScan(data.u, counts, data.d, data.x_star, noise, expected.copy())
