"""Spatial perturbation profiles phi(x), their superposition, and field shapes psi(x, d).

All coordinates are dimensionless (x = k0*z) and phi is the dimensionless
coupling D*f/(hbar*omega0). Profiles are immutable, vectorised callables that
vanish identically outside a finite ``support``; the quadrature code relies on
``support`` and ``breakpoints`` to split integrals at kinks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import ValidationError

PEAK_WARN = 0.05
PEAK_REJECT = 0.5


def _check_peak(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite")
    if abs(value) > PEAK_REJECT:
        raise ValidationError(
            f"{what} = {value:g} is outside the perturbative regime (|phi| <= {PEAK_REJECT})"
        )
    if abs(value) > PEAK_WARN:
        warnings.warn(f"{what} = {value:g} is large for first-order theory", stacklevel=3)


class Profile:
    """Base class. Subclasses implement ``_eval`` on points inside the support."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        out = np.zeros_like(x)
        if np.any(inside):
            out[inside] = self._eval(x[inside])
        return out if out.ndim else float(out)

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Interior points where phi is not smooth (support edges are implicit)."""
        return ()

    # subclasses expose ``peak``: the largest |phi| (field or property)

    def scaled(self, s: float) -> "Profile":
        raise NotImplementedError

    def shifted(self, c: float) -> "Profile":
        """Profile moved by +c, i.e. ``p.shifted(c)(x) == p(x - c)``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(Profile):
    center: float
    sigma: float
    peak: float
    cutoff: float = 8.0  # in units of sigma

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("Gaussian sigma must be positive")
        if not self.cutoff > 0:
            raise ValidationError("Gaussian cutoff must be positive")
        _check_peak(self.peak, "Gaussian peak")

    @property
    def support(self):
        half = self.cutoff * self.sigma
        return (self.center - half, self.center + half)

    def _eval(self, x):
        return self.peak * np.exp(-0.5 * ((x - self.center) / self.sigma) ** 2)

    def scaled(self, s):
        return replace(self, peak=self.peak * s)

    def shifted(self, c):
        return replace(self, center=self.center + c)

    def to_dict(self):
        return {"shape": "gaussian", "center": self.center, "sigma": self.sigma,
                "peak": self.peak, "cutoff": self.cutoff}


@dataclass(frozen=True)
class Lorentzian(Profile):
    center: float
    gamma: float
    peak: float
    rel_cutoff: float = 1e-12  # truncate where phi < rel_cutoff * peak

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError("Lorentzian gamma must be positive")
        if not 0 < self.rel_cutoff < 1:
            raise ValidationError("Lorentzian rel_cutoff must lie in (0, 1)")
        _check_peak(self.peak, "Lorentzian peak")

    @property
    def support(self):
        half = self.gamma * math.sqrt(1.0 / self.rel_cutoff - 1.0)
        return (self.center - half, self.center + half)

    def _eval(self, x):
        return self.peak / (1.0 + ((x - self.center) / self.gamma) ** 2)

    def scaled(self, s):
        return replace(self, peak=self.peak * s)

    def shifted(self, c):
        return replace(self, center=self.center + c)

    def to_dict(self):
        return {"shape": "lorentzian", "center": self.center, "gamma": self.gamma,
                "peak": self.peak, "rel_cutoff": self.rel_cutoff}


@dataclass(frozen=True)
class TopHat(Profile):
    left: float
    right: float
    height: float
    check_peak: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if not self.right > self.left:
            raise ValidationError("TopHat needs left < right")
        if self.check_peak:
            _check_peak(self.height, "TopHat height")

    @property
    def support(self):
        return (self.left, self.right)

    @property
    def peak(self):
        return self.height

    def _eval(self, x):
        return np.full_like(x, self.height)

    def scaled(self, s):
        return replace(self, height=self.height * s)

    def shifted(self, c):
        return replace(self, left=self.left + c, right=self.right + c)

    def to_dict(self):
        return {"shape": "tophat", "left": self.left, "right": self.right, "height": self.height}


@dataclass(frozen=True)
class ExpDecay(Profile):
    """One-sided exponential tail starting at ``edge``.

    ``direction=+1`` decays towards +x, ``direction=-1`` towards -x.
    """

    edge: float
    scale: float
    peak: float
    direction: int = 1
    rel_cutoff: float = 1e-12

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("ExpDecay scale must be positive")
        if self.direction not in (1, -1):
            raise ValidationError("ExpDecay direction must be +1 or -1")
        _check_peak(self.peak, "ExpDecay peak")

    @property
    def support(self):
        length = self.scale * math.log(1.0 / self.rel_cutoff)
        if self.direction > 0:
            return (self.edge, self.edge + length)
        return (self.edge - length, self.edge)

    def _eval(self, x):
        return self.peak * np.exp(-self.direction * (x - self.edge) / self.scale)

    def scaled(self, s):
        return replace(self, peak=self.peak * s)

    def shifted(self, c):
        return replace(self, edge=self.edge + c)

    def to_dict(self):
        return {"shape": "expdecay", "edge": self.edge, "scale": self.scale, "peak": self.peak,
                "direction": self.direction, "rel_cutoff": self.rel_cutoff}


@dataclass(frozen=True)
class Tabulated(Profile):
    """Piecewise-linear profile through sorted samples; zero outside the table."""

    x: tuple[float, ...]
    phi: tuple[float, ...]
    check_peak: bool = field(default=True, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        ys = np.asarray(self.phi, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValidationError("Tabulated profile needs matching 1-D x and phi (>= 2 points)")
        if np.any(np.diff(xs) <= 0):
            raise ValidationError("Tabulated x must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise ValidationError("Tabulated phi must be finite")
        object.__setattr__(self, "x", tuple(map(float, xs)))
        object.__setattr__(self, "phi", tuple(map(float, ys)))
        if self.check_peak:
            _check_peak(self.peak, "Tabulated peak")

    @property
    def support(self):
        return (self.x[0], self.x[-1])

    @property
    def breakpoints(self):
        return self.x[1:-1]

    @property
    def peak(self):
        return max(self.phi, key=abs)

    def _eval(self, x):
        return np.interp(x, self.x, self.phi)

    def scaled(self, s):
        return Tabulated(self.x, tuple(s * v for v in self.phi), self.check_peak)

    def shifted(self, c):
        return Tabulated(tuple(v + c for v in self.x), self.phi, self.check_peak)

    def to_dict(self):
        return {"shape": "tabulated", "x": list(self.x), "phi": list(self.phi)}


@dataclass(frozen=True)
class ProfileSum(Profile):
    """Pointwise sum of profiles. Support is the hull of the parts."""

    terms: tuple[Profile, ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in self.terms:
            out = out + t(x)
        return out if out.ndim else float(out)

    @property
    def support(self):
        if not self.terms:
            return (0.0, 0.0)
        return (min(t.support[0] for t in self.terms), max(t.support[1] for t in self.terms))

    @property
    def breakpoints(self):
        pts = set()
        for t in self.terms:
            pts.update(t.support)
            pts.update(t.breakpoints)
        return tuple(sorted(pts))

    @property
    def peak(self):
        return sum(abs(t.peak) for t in self.terms)

    def scaled(self, s):
        return ProfileSum(tuple(t.scaled(s) for t in self.terms))

    def shifted(self, c):
        return ProfileSum(tuple(t.shifted(c) for t in self.terms))

    def to_dict(self):
        return {"shape": "sum", "terms": [t.to_dict() for t in self.terms]}


ZERO = ProfileSum(())

_SHAPES = {
    "gaussian": Gaussian,
    "lorentzian": Lorentzian,
    "tophat": TopHat,
    "expdecay": ExpDecay,
}


def profile_from_dict(spec: dict) -> Profile:
    spec = dict(spec)
    shape = str(spec.pop("shape", "")).lower()
    if shape == "zero":
        return ZERO
    if shape == "tabulated":
        return Tabulated(tuple(spec["x"]), tuple(spec["phi"]))
    if shape == "sum":
        return ProfileSum(tuple(profile_from_dict(t) for t in spec["terms"]))
    if shape not in _SHAPES:
        raise ValidationError(f"unknown profile shape {shape!r}")
    try:
        return _SHAPES[shape](**spec)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {shape} profile: {exc}") from None


def composite_profile(p1: Profile, p2: Profile, d: float) -> ProfileSum:
    """Total perturbation x -> p1(x + d) + p2(x) as a profile."""
    if d < 0:
        raise ValidationError("displacement d must be non-negative")
    return ProfileSum((p1.shifted(-d), p2))


def composite(p1: Profile, p2: Profile, d: float, x):
    if d < 0:
        raise ValidationError("displacement d must be non-negative")
    return p1(np.asarray(x, dtype=float) + d) + p2(x)


# ---------------------------------------------------------------------------
# inter-electrode field shape


@dataclass(frozen=True)
class UniformGap:
    """psi = 1/d on [-d, 0]: electrode gap large compared with the slit width."""

    def psi_profile(self, d: float) -> Profile:
        if not d > 0:
            raise ValidationError("psi needs d > 0")
        # psi is O(1); the smallness sits in the voltage u
        return TopHat(-d, 0.0, 1.0 / d, check_peak=False)

    def to_dict(self):
        return {"gap": "uniform"}


@dataclass(frozen=True)
class GeneralGap:
    """Effective gap lambda(x, d) tabulated on a regular (x, d) grid; psi = 1/lambda.

    ``x`` is measured in the frame of the second electrode, lambda in units of 1/k0.
    psi vanishes outside the tabulated x range.
    """

    x: tuple[float, ...]
    d: tuple[float, ...]
    lam: tuple[tuple[float, ...], ...]  # shape (len(x), len(d))

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (len(self.x), len(self.d)):
            raise ValidationError("GeneralGap lam must have shape (len(x), len(d))")
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValidationError("effective gap lambda must be positive and finite")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.d) <= 0):
            raise ValidationError("GeneralGap grids must be strictly increasing")

    def _interp(self):
        return RegularGridInterpolator((np.asarray(self.x), np.asarray(self.d)),
                                       np.asarray(self.lam, dtype=float))

    def psi_profile(self, d: float) -> Profile:
        if not d > 0:
            raise ValidationError("psi needs d > 0")
        if not self.d[0] <= d <= self.d[-1]:
            raise ValidationError(f"d = {d} outside tabulated range [{self.d[0]}, {self.d[-1]}]")
        xs = np.asarray(self.x)
        lam = self._interp()(np.column_stack([xs, np.full_like(xs, d)]))
        return Tabulated(tuple(xs), tuple(1.0 / lam), check_peak=False)

    def to_dict(self):
        return {"gap": "general", "x": list(self.x), "d": list(self.d),
                "lam": [list(r) for r in self.lam]}


@dataclass(frozen=True)
class FieldGeometry:
    gap_model: UniformGap | GeneralGap = field(default_factory=UniformGap)
    u0_scale: float = 1.0  # reference voltage U0 = hbar*v_a/D, volts

    def __post_init__(self):
        if not self.u0_scale > 0:
            raise ValidationError("u0_scale must be positive")

    def to_dict(self):
        return {**self.gap_model.to_dict(), "u0_scale": self.u0_scale}

    @classmethod
    def from_dict(cls, spec: dict) -> "FieldGeometry":
        spec = dict(spec)
        gap = str(spec.pop("gap", "uniform")).lower()
        u0 = float(spec.pop("u0_scale", 1.0))
        if gap == "uniform":
            model = UniformGap()
        elif gap == "general":
            model = GeneralGap(tuple(spec["x"]), tuple(spec["d"]),
                               tuple(tuple(r) for r in spec["lam"]))
        else:
            raise ValidationError(f"unknown gap model {gap!r}")
        return cls(model, u0)


def psi(geometry: FieldGeometry, x, d: float):
    return geometry.gap_model.psi_profile(d)(x)


# ---------------------------------------------------------------------------
# experiment layout


@dataclass(frozen=True)
class ExperimentGeometry:
    """Collimator edge xi0 < 0 < detection point x_star, d = d0 + ell.

    A single collimator coordinate is used: xi0 is the collimator edge in the
    frame of the first slit, so the same edge sits at x0 = xi0 - d in the frame
    of the second slit.
    """

    xi0: float
    x_star: float
    d0: float = 0.0
    ell_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.xi0 < 0 < self.x_star:
            raise ValidationError("geometry needs xi0 < 0 < x_star")
        if self.d0 < 0:
            raise ValidationError("d0 must be non-negative")
        ell = np.asarray(self.ell_grid, dtype=float)
        object.__setattr__(self, "ell_grid", tuple(map(float, ell)))
        if ell.size and (np.any(ell < 0) or np.any(np.diff(ell) <= 0)):
            raise ValidationError("ell grid must be non-negative and increasing")

    @property
    def d_grid(self) -> np.ndarray:
        return self.d0 + np.asarray(self.ell_grid)

    def x0(self, d: float) -> float:
        return self.xi0 - d


def is_narrow(profile: Profile, geom: ExperimentGeometry, beta: float) -> bool:
    """Support inside [xi0, x_star] with a margin of at least one damping length 1/beta."""
    lo, hi = profile.support
    margin = 1.0 / beta
    return lo - geom.xi0 >= margin and geom.x_star - hi >= margin

