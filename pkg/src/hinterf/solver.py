"""Amplitude evolution in a weak static perturbation.

Two routes to A_p(x*):

* ``integrate_two_level`` integrates the full coupled system
  dA_s/dx = i phi A_p,  dA_p/dx = i phi A_s + (i - beta) A_p
  with an adaptive Runge-Kutta scheme. It is the reference for the
* ``first_order_amplitude`` route, which drops the back-action on A_s and
  reduces everything to kernel integrals of exp[(beta - i) x] phi(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .core import AmplitudePair, ValidationError
from .perturbation import ExperimentGeometry, Profile, composite_profile

TWO_PI = 2.0 * math.pi
MAX_PANEL = TWO_PI  # GK21 per panel -> >= 21 nodes per oscillation period


class IntegrationError(RuntimeError):
    """ODE integration failed (step-size underflow or norm growth)."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


# ---------------------------------------------------------------------------
# quadrature


def _panel_points(lo: float, hi: float, breaks) -> list[float]:
    pts = {lo, hi}
    pts.update(b for b in breaks if lo < b < hi)
    edges = sorted(pts)
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((b - a) / MAX_PANEL))
        out.extend(np.linspace(a, b, n + 1)[1:].tolist())
    return out


def kernel_integral(profile: Profile, lower: float, upper: float, beta: float,
                    epsrel: float = 1e-11) -> complex:
    """Integral of exp[(beta - i) x] * phi(x) over [lower, upper].

    The range is clipped to the profile support and split at kinks and into
    panels no wider than one oscillation period before adaptive Gauss-Kronrod
    refinement.
    """
    if lower > upper:
        raise ValidationError("kernel_integral needs lower <= upper")
    lo_s, hi_s = profile.support
    lo, hi = max(lower, lo_s), min(upper, hi_s)
    if not hi > lo:
        return 0j
    scale = abs(profile.peak) * (hi - lo) * math.exp(beta * max(abs(lo), abs(hi)))
    if scale == 0.0:
        return 0j
    k = beta - 1j
    pts = _panel_points(lo, hi, getattr(profile, "breakpoints", ()))

    def f(x):
        return np.exp(k * x) * profile(x)

    value, err, info = quad_vec(f, lo, hi, epsrel=epsrel, epsabs=1e-15 * scale,
                                points=pts[1:-1], limit=20000, full_output=True)
    # status 2 (rounding floor) is acceptable when the estimate still meets the target
    target = max(1e-15 * scale, epsrel * abs(value))
    if info.status == 1 or (info.status != 0 and err > 10 * target):
        raise QuadratureError(
            f"kernel quadrature on [{lo:g}, {hi:g}] did not converge: "
            f"estimated error {err:.3g} vs |I| = {abs(value):.3g}"
        )
    return complex(value)


# ---------------------------------------------------------------------------
# first-order solution


def first_order_amplitude(phi: Profile, s0: complex, p0: complex, x0: float, x_star: float,
                          beta: float) -> complex:
    """A_p(x*) to first order in phi, starting from A_s = s0, A_p = p0 at x0."""
    if not x0 < x_star:
        raise ValidationError("first_order_amplitude needs x0 < x_star")
    k = 1j - beta
    source = 1j * s0 * np.exp(k * x_star) * kernel_integral(phi, x0, x_star, beta)
    return complex(source + p0 * np.exp(k * (x_star - x0)))


# ---------------------------------------------------------------------------
# full two-level system


@dataclass
class TwoLevelTrajectory:
    x: np.ndarray
    a_s: np.ndarray
    a_p: np.ndarray

    @property
    def norm(self) -> np.ndarray:
        return np.abs(self.a_s) ** 2 + np.abs(self.a_p) ** 2

    @property
    def final(self) -> AmplitudePair:
        return AmplitudePair(complex(self.a_s[-1]), complex(self.a_p[-1]))


def integrate_two_level(phi, s0: complex, p0: complex, x0: float, x_star: float, beta: float,
                        rtol: float = 1e-10, atol: float = 1e-13,
                        max_step: float = TWO_PI / 16, check_norm: bool = True,
                        return_trajectory: bool = False):
    """Integrate the coupled amplitude equations from x0 to x_star (DOP853).

    With ``check_norm`` the total population |A_s|^2 + |A_p|^2 is required to be
    non-increasing over accepted steps (real phi only), allowing for the
    integrator's own error budget.
    """
    if not x0 < x_star:
        raise ValidationError("integrate_two_level needs x0 < x_star")
    decay = 1j - beta

    def rhs(x, y):
        f = phi(x)
        return np.array([1j * f * y[1], 1j * f * y[0] + decay * y[1]])

    sol = solve_ivp(rhs, (x0, x_star), np.array([s0, p0], dtype=complex), method="DOP853",
                    rtol=rtol, atol=atol, max_step=max_step)
    if sol.status != 0:
        reached = sol.t[-1] if sol.t.size else x0
        raise IntegrationError(f"integration stopped at x = {reached:.6g}: {sol.message}")
    traj = TwoLevelTrajectory(sol.t, sol.y[0], sol.y[1])
    if check_norm:
        norm = traj.norm
        slack = 10.0 * (rtol * norm[:-1] + atol)
        growth = np.diff(norm) - slack
        if np.any(growth > 0):
            i = int(np.argmax(growth))
            raise IntegrationError(
                f"population grew by {np.diff(norm)[i]:.3g} at x = {traj.x[i + 1]:.6g}"
            )
    return traj if return_trajectory else traj.final


# ---------------------------------------------------------------------------
# perturbation integrals for the two-slit layout


@dataclass(frozen=True)
class PerturbationIntegrals:
    z1: complex
    z2: complex
    z10: complex
    z20: complex
    rho0: complex

    @property
    def alpha10(self) -> float:
        return float(np.angle(self.z10))

    @property
    def alpha20(self) -> float:
        return float(np.angle(self.z20))


@dataclass(frozen=True)
class OverlapCorrections:
    delta1: complex
    delta2: complex
    delta10: complex
    delta20: complex
    eps0: float
    eps1: float
    eps2: float
    small: bool  # |Delta_n|^2 <= 1e-2 |z_n0|^2 for both n

    def to_dict(self) -> dict:
        return {k: (str(v) if isinstance(v, complex) else v) for k, v in self.__dict__.items()}


def compute_integrals(p1: Profile, p2: Profile, geom: ExperimentGeometry, d: float,
                      s0: complex, p0: complex, beta: float) -> PerturbationIntegrals:
    """Full and principal-value perturbation integrals at separation d.

    ``p1`` lives in the frame of the first slit (coordinate xi = x + d).
    """
    if s0 == 0:
        raise ValidationError("S0 = 0: rho0 is undefined")
    xi0, xs = geom.xi0, geom.x_star
    z1 = kernel_integral(p1, xi0, xs + d, beta)
    z2 = kernel_integral(p2, xi0 - d, xs, beta)
    z10 = kernel_integral(p1, xi0, xs, beta)
    z20 = kernel_integral(p2, xi0, xs, beta)
    rho0 = -1j * p0 / s0 * np.exp((beta - 1j) * xi0)
    return PerturbationIntegrals(z1, z2, z10, z20, complex(rho0))


def compute_corrections(p1: Profile, p2: Profile, geom: ExperimentGeometry, d: float,
                        rho0: complex, beta: float,
                        integrals: PerturbationIntegrals) -> OverlapCorrections:
    """Exact tail corrections, their linear-in-d forms, and the small parameters eps0..eps2."""
    z10m, z20m = abs(integrals.z10), abs(integrals.z20)
    if z10m == 0 or z20m == 0:
        raise ValidationError("|z10| and |z20| must be non-zero for the eps parameters")
    xi0, xs = geom.xi0, geom.x_star
    k = beta - 1j
    delta1 = kernel_integral(p1, xs, xs + d, beta) + rho0
    delta2 = kernel_integral(p2, xi0 - d, xi0, beta)
    phi1_xs = float(p1(xs))
    phi2_xi0 = float(p2(xi0))
    delta10 = complex(np.exp(k * xs) * phi1_xs * d)
    delta20 = complex(np.exp(k * xi0) * phi2_xi0 * d)
    a10, a20 = integrals.alpha10, integrals.alpha20
    eps0 = abs(rho0) * math.cos(a10 - np.angle(rho0)) / z10m if rho0 != 0 else 0.0
    eps1 = math.exp(beta * xs) * phi1_xs * math.cos(a10 + xs) / z10m
    eps2 = math.exp(beta * xi0) * phi2_xi0 * math.cos(a20 + xi0) / z20m
    small = abs(delta1) ** 2 <= 1e-2 * z10m**2 and abs(delta2) ** 2 <= 1e-2 * z20m**2
    return OverlapCorrections(delta1, delta2, delta10, delta20, eps0, eps1, eps2, small)


@dataclass(frozen=True)
class CollimatorCheck:
    satisfied: bool
    threshold: float
    margin_factor: float


def check_collimator_distance(xi0: float, beta: float, z10_mod: float,
                              margin_factor: float = 3.0) -> CollimatorCheck:
    """Is the collimator far enough upstream for P0 to be negligible?

    threshold = ln(2/|z10|)/beta; "much greater" is taken as ``margin_factor`` times it.
    """
    if not z10_mod > 0:
        raise ValidationError("|z10| must be positive")
    threshold = math.log(2.0 / z10_mod) / beta
    return CollimatorCheck(abs(xi0) >= margin_factor * threshold, threshold, margin_factor)


def two_slit_amplitude(p1: Profile, p2: Profile, geom: ExperimentGeometry, d: float,
                       s0: complex, p0: complex, beta: float, extra: Profile | None = None) -> complex:
    """First-order A_p(x*) for slit 1 displaced by d, optionally with an extra field term."""
    phi = composite_profile(p1, p2, d)
    if extra is not None:
        phi = type(phi)(phi.terms + (extra,))
    return first_order_amplitude(phi, s0, p0, geom.x0(d), geom.x_star, beta)
