"""Quadratic voltage-scan fits and their inversion to |z|^2 and the internal voltage u_i."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import ValidationError
from ..interferogram import VoltageScan


class DegenerateSystemError(ValueError):
    """The two-run system cannot be solved (for instance G(d1) == G(d2))."""


class InconsistentSystemError(ValueError):
    """No admissible root: the data do not fit the two-run model."""


@dataclass
class QuadraticFit:
    c0: float
    c1: float
    c2: float
    covariance: np.ndarray
    flags: list[str] = field(default_factory=list)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.c0 + self.c1 * u + self.c2 * u**2

    def to_dict(self):
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2,
                "covariance": self.covariance.tolist(), "flags": list(self.flags)}


def fit_voltage_scan(data, counts=None, *, weighting: str = "poisson") -> QuadraticFit:
    """Weighted linear least squares of counts on {1, u_e, u_e^2}."""
    if isinstance(data, VoltageScan):
        u, y = data.u, data.counts
    else:
        u, y = np.asarray(data, dtype=float), np.asarray(counts, dtype=float)
    if u.shape != y.shape:
        raise ValidationError("u_e and counts must have equal length")
    if np.unique(u).size < 3:
        raise ValidationError("need at least 3 distinct u_e values")
    if weighting == "poisson":
        sig = np.sqrt(np.maximum(y, 1.0))
    elif weighting == "none":
        sig = np.ones_like(y)
    else:
        raise ValidationError(f"unknown weighting {weighting!r}")
    A = np.column_stack([np.ones_like(u), u, u * u]) / sig[:, None]
    c, *_ = np.linalg.lstsq(A, y / sig, rcond=None)
    cov = np.linalg.pinv(A.T @ A)
    if weighting == "none":
        r = A @ c - y / sig
        cov = cov * float(r @ r) / max(u.size - 3, 1)
    fit = QuadraticFit(float(c[0]), float(c[1]), float(c[2]), cov)
    if fit.c2 < 0:
        sig2 = math.sqrt(max(cov[2, 2], 0.0))
        fit.flags.append("c2 negative" + (" within noise" if -fit.c2 <= 3 * sig2 else ""))
    return fit


@dataclass
class FcfSolution:
    """Admissible (u_i, |z|^2) pairs solving the two-run system; never pre-selected."""

    candidates: list[tuple[float, float]]
    residuals: list[float]

    @property
    def root_multiplicity(self) -> int:
        return len(self.candidates)

    @property
    def ambiguous(self) -> bool:
        return len(self.candidates) > 1

    def to_dict(self):
        return {
            "candidates": [{"u_i": u, "z_mod2": z} for u, z in self.candidates],
            "residuals": list(self.residuals),
            "root_multiplicity": self.root_multiplicity,
            "ambiguous": self.ambiguous,
        }


def solve_fcf(run1: tuple[QuadraticFit, float], run2: tuple[QuadraticFit, float],
              rtol: float = 1e-8) -> FcfSolution:
    """Solve c0/c2 - (c1/c2) u_i + u_i^2 = |z|^2 G(d) for two runs.

    Eliminating |z|^2 leaves (G2 - G1) u^2 + (G1 s2 - G2 s1) u + (G2 r1 - G1 r2) = 0
    with r = c0/c2, s = c1/c2. Every real root with |z|^2 > 0 is returned.
    """
    (f1, g1), (f2, g2) = run1, run2
    for f in (f1, f2):
        if not f.c2 > 0:
            raise ValidationError("c2 must be positive in both runs")
    if not (g1 > 0 and g2 > 0):
        raise ValidationError("G(d) must be positive")
    if abs(g1 - g2) <= 1e-12 * max(g1, g2):
        raise DegenerateSystemError("G(d1) == G(d2): the two runs carry the same information")
    r1, s1 = f1.c0 / f1.c2, f1.c1 / f1.c2
    r2, s2 = f2.c0 / f2.c2, f2.c1 / f2.c2
    A = g2 - g1
    B = g1 * s2 - g2 * s1
    C = g2 * r1 - g1 * r2
    disc = B * B - 4 * A * C
    if disc < 0:
        raise InconsistentSystemError("no real solution for u_i (negative discriminant)")
    sq = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(sq, B))
    roots = {q / A}
    if q != 0:
        roots.add(C / q)
    cands, resid = [], []
    for u in sorted(roots):
        z1 = (r1 - s1 * u + u * u) / g1
        z2 = (r2 - s2 * u + u * u) / g2
        z = 0.5 * (z1 + z2)
        if z <= 0:
            continue
        mismatch = abs(z1 - z2) / max(abs(z), 1e-300)
        if mismatch > rtol:
            continue
        cands.append((float(u), float(z)))
        resid.append(float(mismatch))
    if not cands:
        raise InconsistentSystemError("no real root with |z|^2 > 0: model mismatch")
    return FcfSolution(cands, resid)


def recover_slit_integral(fit: QuadraticFit, G: float, assume_ui_zero: bool = True) -> float:
    """|z|^2 = c0 / (c2 G), valid when the internal voltage is zero."""
    if not assume_ui_zero:
        raise ValidationError("with u_i != 0 use solve_fcf (two runs) instead")
    if not fit.c2 > 0:
        raise ValidationError("c2 must be positive")
    if not (math.isfinite(G) and G > 1e-300):
        raise ValidationError("G must be positive and finite (pole at G -> 0)")
    return fit.c0 / (fit.c2 * G)
