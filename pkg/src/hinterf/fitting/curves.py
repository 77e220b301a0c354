"""Least-squares fits of interferograms: standard (F0), corrected (F1) and legacy forms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import ValidationError
from ..interferogram import Interferogram, corrected_fit_function, legacy_model_F
from .lm import LMResult, levenberg_marquardt

ILL_CONDITIONED = 1e12


class DegenerateDataError(ValueError):
    """Data carry no information about the requested parameters."""


def wrap_phase(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w == -math.pi else w


def _xy(data, y=None):
    if isinstance(data, Interferogram):
        return data.ell, data.counts
    return np.asarray(data, dtype=float), np.asarray(y, dtype=float)


def _sigma(y, weighting: str) -> np.ndarray:
    if weighting == "poisson":
        return np.sqrt(np.maximum(y, 1.0))
    if weighting == "none":
        return np.ones_like(y)
    raise ValidationError(f"unknown weighting {weighting!r}")


@dataclass
class FitResult:
    names: tuple[str, ...]
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float  # sqrt(sum of weighted squared residuals)
    dof: int
    converged: bool
    message: str
    n_iter: int
    condition_number: float
    weighting: str
    flags: list[str] = field(default_factory=list)
    history: list[float] = field(default_factory=list, repr=False)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def sigma(self, name: str) -> float:
        i = self.names.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    @property
    def reduced_chi2(self) -> float:
        return self.residual_norm**2 / max(self.dof, 1)

    def to_dict(self) -> dict:
        return {
            "params": {n: float(v) for n, v in zip(self.names, self.params)},
            "sigma": {n: self.sigma(n) for n in self.names},
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "reduced_chi2": self.reduced_chi2,
            "dof": self.dof,
            "converged": self.converged,
            "message": self.message,
            "n_iter": self.n_iter,
            "condition_number": self.condition_number,
            "weighting": self.weighting,
            "flags": list(self.flags),
        }


@dataclass
class FitResultF0(FitResult):
    beta: float = 0.0

    @property
    def a1(self):
        return self["a1"]

    @property
    def a2(self):
        return self["a2"]

    @property
    def a3(self):
        return self["a3"]

    @property
    def b(self):
        return self["b"] if "b" in self.names else 0.0

    @property
    def p(self) -> float:
        """Pedestal, always recomputed from a1 and a2 unless fitted free."""
        if "p" in self.names:
            return self["p"]
        return self.a2**2 / (4 * self.a1)

    @property
    def mu(self) -> float:
        return self.a2 / self.a1

    def model(self, ell):
        e = np.asarray(ell, dtype=float)
        b = self.beta
        return (self.a1 * np.exp(-2 * b * e) + self.a2 * np.exp(-b * e) * np.cos(e + self.a3)
                + self.p + self.b)

    def to_dict(self):
        out = super().to_dict()
        out.update(model="standard", beta=self.beta, pedestal=self.p, mu=self.mu)
        return out


@dataclass
class FitResultF1(FitResult):
    beta: float = 0.0
    constraint: str = "ratio"

    @property
    def a(self) -> np.ndarray:
        return self.params.copy()

    def model(self, ell):
        return corrected_fit_function(self.params, self.beta, ell)

    def to_dict(self):
        out = super().to_dict()
        out.update(model="corrected", beta=self.beta, constraint=self.constraint)
        return out


@dataclass
class FitResultLegacy(FitResult):
    R: float = 1.0

    def model(self, L):
        return legacy_model_F(*self.params, self.R, L)

    def to_dict(self):
        out = super().to_dict()
        out.update(model="legacy", R=self.R)
        return out


def _check_interferogram(ell, y, min_points=8):
    if ell.size < min_points:
        raise DegenerateDataError(f"need at least {min_points} points, got {ell.size}")
    if np.ptp(ell) < 2 * math.pi:
        raise DegenerateDataError("data must span at least one oscillation period (2*pi in ell)")
    if np.ptp(y) == 0:
        raise DegenerateDataError("no oscillatory component: counts are constant")


def _multistart(residual, jacobian, starts) -> LMResult:
    best = None
    for p0 in starts:
        res = levenberg_marquardt(residual, jacobian, p0)
        # strict < keeps the lowest start index on ties
        if best is None or res.cost < best.cost:
            best = res
    return best


def _phase_starts(guess, phase_index: int, n_starts: int):
    starts = [np.array(guess, dtype=float)]
    for k in range(n_starts):
        p = np.array(guess, dtype=float)
        p[phase_index] = -math.pi + 2 * math.pi * (k + 1) / n_starts
        starts.append(p)
    return starts


def _flip_gauge(params, cov, i_amp, i_phase):
    """Canonical sign a2 >= 0 (a2 -> -a2, a3 -> a3 + pi), phase wrapped."""
    params = params.copy()
    cov = cov.copy()
    if params[i_amp] < 0:
        params[i_amp] = -params[i_amp]
        params[i_phase] += math.pi
        cov[i_amp, :] *= -1
        cov[:, i_amp] *= -1
    params[i_phase] = wrap_phase(params[i_phase])
    return params, cov


# ---------------------------------------------------------------------------
# standard interferogram


def fit_standard(data, beta: float, counts=None, *, weighting: str = "poisson",
                 free_pedestal: bool = False, n_starts: int = 8) -> FitResultF0:
    """Fit a1 exp(-2 beta l) + a2 exp(-beta l) cos(l + a3) + p + b.

    By default p = a2^2/(4 a1) (parameters a1, a2, a3, b). With
    ``free_pedestal`` the constant term is a single free parameter ``p``.
    """
    ell, y = _xy(data, counts)
    _check_interferogram(ell, y)
    sig = _sigma(y, weighting)
    e2 = np.exp(-2 * beta * ell)
    e1 = np.exp(-beta * ell)

    basis = np.column_stack([e2, e1 * np.cos(ell), e1 * np.sin(ell), np.ones_like(ell)])
    c = np.linalg.lstsq(basis / sig[:, None], y / sig, rcond=None)[0]
    a1 = c[0] if c[0] > 0 else max(np.ptp(y), 1e-12)
    a2 = math.hypot(c[1], c[2])
    a3 = math.atan2(-c[2], c[1])

    if free_pedestal:
        names = ("a1", "a2", "a3", "p")
        guess = [a1, a2, a3, c[3]]

        def model_jac(p):
            a1, a2, a3, _ = p
            cs, sn = np.cos(ell + a3), np.sin(ell + a3)
            f = a1 * e2 + a2 * e1 * cs + p[3]
            J = np.column_stack([e2, e1 * cs, -a2 * e1 * sn, np.ones_like(ell)])
            return f, J
    else:
        names = ("a1", "a2", "a3", "b")
        guess = [a1, a2, a3, c[3] - a2**2 / (4 * a1)]

        def model_jac(p):
            a1, a2, a3, b = p
            cs, sn = np.cos(ell + a3), np.sin(ell + a3)
            f = a1 * e2 + a2 * e1 * cs + a2**2 / (4 * a1) + b
            J = np.column_stack([e2 - a2**2 / (4 * a1**2), e1 * cs + a2 / (2 * a1),
                                 -a2 * e1 * sn, np.ones_like(ell)])
            return f, J

    res = _multistart(lambda p: (model_jac(p)[0] - y) / sig,
                      lambda p: model_jac(p)[1] / sig[:, None],
                      _phase_starts(guess, 2, n_starts))
    cov = res.covariance(scale_by_residual=(weighting == "none"))
    params, cov = _flip_gauge(res.params, cov, 1, 2)
    out = FitResultF0(names, params, cov, math.sqrt(2 * res.cost), ell.size - len(names),
                      res.converged, res.message, res.n_iter, res.condition_number, weighting,
                      history=res.history, beta=beta)
    if params[0] <= 0:
        out.flags.append("a1 not positive")
    if not res.converged:
        out.flags.append("not converged")
    return out


# ---------------------------------------------------------------------------
# corrected interferogram


def _f1_parts(a, beta, ell):
    a1, a2, a3, a4, a5, a6, a7, a8 = a
    e2 = np.exp(-2 * beta * ell)
    e1 = np.exp(-beta * ell)
    cs, sn = np.cos(ell + a3), np.sin(ell + a3)
    P = 1 + 2 * (a5 + a6 * ell)
    Q = 1 + a5 + a7 + (a6 + a8) * ell
    S = 1 + 2 * (a7 + a8 * ell)
    f = a1 * P * e2 + a2 * Q * e1 * cs + a4 * S
    J = np.column_stack([
        P * e2,
        Q * e1 * cs,
        -a2 * Q * e1 * sn,
        S,
        2 * a1 * e2 + a2 * e1 * cs,
        2 * a1 * ell * e2 + a2 * ell * e1 * cs,
        a2 * e1 * cs + 2 * a4,
        a2 * ell * e1 * cs + 2 * a4 * ell,
    ])
    return f, J


def fit_corrected(data, beta: float, counts=None, *, weighting: str = "poisson",
                  constraint: str = "ratio", n_starts: int = 8,
                  d0_starts=(0.0, 2.0, 5.0, 10.0, 20.0)) -> FitResultF1:
    """Fit the eight-parameter corrected function F1.

    F1 has an exact flat direction: scaling (1 + 2 a5) and (1 + 2 a7) by a
    common factor, with a1, a2, a4 divided and a6, a8 multiplied by it, leaves
    the curve unchanged. Along it a4 - a2^2/(4 a1) is constant but
    a5/a6 - a7/a8 is not. ``constraint="ratio"`` (default) therefore fixes
    a5 = d0 a6, a7 = d0 a8 and fits (a1, a2, a3, a4, a6, a8, d0); the pedestal
    relation stays a genuine quality check. ``constraint="none"`` fits all eight
    and is always flagged ill-conditioned.
    """
    ell, y = _xy(data, counts)
    _check_interferogram(ell, y)
    if np.ptp(ell) < 6 * math.pi:
        warnings.warn("ell range below three periods; linear-in-ell terms are poorly identified",
                      stacklevel=2)
    sig = _sigma(y, weighting)
    e2 = np.exp(-2 * beta * ell)
    e1 = np.exp(-beta * ell)

    basis = np.column_stack([e2, ell * e2, e1 * np.cos(ell), e1 * np.sin(ell),
                             ell * e1 * np.cos(ell), ell * e1 * np.sin(ell),
                             np.ones_like(ell), ell])
    c = np.linalg.lstsq(basis / sig[:, None], y / sig, rcond=None)[0]
    A = c[0] if c[0] > 0 else max(np.ptp(y), 1e-12)
    C = math.hypot(c[2], c[3])
    a3 = math.atan2(-c[3], c[2])
    a6 = c[1] / (2 * A)
    a8 = c[7] / (2 * c[6]) if c[6] != 0 else 0.0

    if constraint == "ratio":
        # q = (a1, a2, a3, a4, a6, a8, d0)
        def expand(q):
            a1, a2, a3, a4, a6, a8, d0 = q
            return np.array([a1, a2, a3, a4, d0 * a6, a6, d0 * a8, a8])

        def model_jac(q):
            f, J = _f1_parts(expand(q), beta, ell)
            d0 = q[6]
            Jq = np.column_stack([J[:, 0], J[:, 1], J[:, 2], J[:, 3],
                                  J[:, 5] + d0 * J[:, 4], J[:, 7] + d0 * J[:, 6],
                                  q[4] * J[:, 4] + q[5] * J[:, 6]])
            return f, Jq

        starts = _phase_starts([A, C, a3, c[6], a6, a8, d0_starts[0]], 2, n_starts)
        starts += [np.array([A, C, a3, c[6], a6, a8, d0]) for d0 in d0_starts[1:]]
        res = _multistart(lambda q: (model_jac(q)[0] - y) / sig,
                          lambda q: model_jac(q)[1] / sig[:, None], starts)
        cov7 = res.covariance(scale_by_residual=(weighting == "none"))
        q = res.params
        a = expand(q)
        T = np.zeros((8, 7))
        for i, j in ((0, 0), (1, 1), (2, 2), (3, 3), (5, 4), (7, 5)):
            T[i, j] = 1.0
        T[4, 4], T[4, 6] = q[6], q[4]
        T[6, 5], T[6, 6] = q[6], q[5]
        cov = T @ cov7 @ T.T
        n_free = 7
    elif constraint == "none":
        guess = np.array([A, C, a3, c[6], 0.0, a6, 0.0, a8])
        res = _multistart(lambda a: (_f1_parts(a, beta, ell)[0] - y) / sig,
                          lambda a: _f1_parts(a, beta, ell)[1] / sig[:, None],
                          _phase_starts(guess, 2, n_starts))
        cov = res.covariance(scale_by_residual=(weighting == "none"))
        a = res.params
        n_free = 8
    else:
        raise ValidationError(f"unknown constraint {constraint!r}")
    names = tuple(f"a{i}" for i in range(1, 9))
    a, cov = _flip_gauge(a, cov, 1, 2)
    out = FitResultF1(names, a, cov, math.sqrt(2 * res.cost), ell.size - n_free, res.converged,
                      res.message, res.n_iter, res.condition_number, weighting,
                      history=res.history, beta=beta, constraint=constraint)
    if out.condition_number > ILL_CONDITIONED:
        out.flags.append("ill-conditioned normal equations")
    if a[0] <= 0:
        out.flags.append("a1 not positive")
    if not res.converged:
        out.flags.append("not converged")
    return out


@dataclass
class ExtractedParams:
    eps1: float
    eps2: float
    d0: float | None
    z_ratio: float | None  # |z10| / |z20|
    pedestal_residual: float
    eps_ratio_residual: float
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def _rel_mismatch(x: float, y: float) -> float:
    scale = max(abs(x), abs(y))
    return 0.0 if scale == 0 else abs(x - y) / scale


def extract(fit: FitResultF1, beta: float, rel_floor: float = 1e-6) -> ExtractedParams:
    """Model parameters recoverable from a corrected fit, plus the two quality residuals.

    d0 needs a6 - a8 to be resolved: below max(3 sigma, rel_floor * max|a6|,|a8|) it is
    reported as undefined rather than computed.
    """
    a1, a2, a3, a4, a5, a6, a7, a8 = fit.params
    pedestal = _rel_mismatch(a4, a2**2 / (4 * a1))
    ratio = _rel_mismatch(a5 * a8, a7 * a6)
    i6, i8 = 5, 7
    var = fit.covariance[i6, i6] + fit.covariance[i8, i8] - 2 * fit.covariance[i6, i8]
    floor = max(3 * math.sqrt(max(var, 0.0)), rel_floor * max(abs(a6), abs(a8)), 1e-300)
    diff = a6 - a8
    if abs(diff) <= floor:
        return ExtractedParams(a6, a8, None, None, pedestal, ratio,
                               note=f"d0 undefined: |a6 - a8| = {abs(diff):.3g} is below the "
                                    f"resolution floor {floor:.3g}")
    d0 = (a5 - a7) / diff
    return ExtractedParams(a6, a8, d0, 2 * a1 / a2 * math.exp(beta * d0), pedestal, ratio)


# ---------------------------------------------------------------------------
# legacy exciter fit function


def fit_legacy(L, counts, R: float, *, weighting: str = "poisson",
               n_periods: int = 400) -> FitResultLegacy:
    """Fit a1 e^{-L/R} + a2 e^{-L/2R} cos(2 pi L/a3 + a4) + a5 with free period a3.

    The period is seeded by a log-spaced scan (linear least squares in the
    remaining parameters at each trial period).
    """
    L = np.asarray(L, dtype=float)
    y = np.asarray(counts, dtype=float)
    if not R > 0:
        raise ValidationError("R must be positive")
    if L.size < 8:
        raise DegenerateDataError(f"need at least 8 points, got {L.size}")
    if np.ptp(y) == 0:
        raise DegenerateDataError("no oscillatory component: counts are constant")
    sig = _sigma(y, weighting)
    ex1 = np.exp(-L / R)
    ex2 = np.exp(-L / (2 * R))
    span = np.ptp(L)

    best = None
    for period in np.geomspace(span / 50, 2 * span, n_periods):
        w = 2 * math.pi * L / period
        B = np.column_stack([ex1, ex2 * np.cos(w), ex2 * np.sin(w), np.ones_like(L)])
        c, *_ = np.linalg.lstsq(B / sig[:, None], y / sig, rcond=None)
        cost = float(np.sum(((B @ c - y) / sig) ** 2))
        if best is None or cost < best[0]:
            best = (cost, period, c)
    _, period, c = best
    guess = [c[0], math.hypot(c[1], c[2]), period, math.atan2(-c[2], c[1]), c[3]]

    def model_jac(p):
        a1, a2, a3, a4, a5 = p
        w = 2 * math.pi * L / a3 + a4
        cs, sn = np.cos(w), np.sin(w)
        f = a1 * ex1 + a2 * ex2 * cs + a5
        J = np.column_stack([ex1, ex2 * cs, a2 * ex2 * sn * 2 * math.pi * L / a3**2,
                             -a2 * ex2 * sn, np.ones_like(L)])
        return f, J

    res = levenberg_marquardt(lambda p: (model_jac(p)[0] - y) / sig,
                              lambda p: model_jac(p)[1] / sig[:, None], guess)
    cov = res.covariance(scale_by_residual=(weighting == "none"))
    params = res.params.copy()
    if params[2] < 0:  # cos(-w L + a4) == cos(w L - a4)
        params[2:4] *= -1
        cov[2:4, :] *= -1
        cov[:, 2:4] *= -1
    params, cov = _flip_gauge(params, cov, 1, 3)
    names = ("a1", "a2", "a3", "a4", "a5")
    out = FitResultLegacy(names, params, cov, math.sqrt(2 * res.cost), L.size - 5, res.converged,
                          res.message, res.n_iter, res.condition_number, weighting,
                          history=res.history, R=R)
    a2_sigma = math.sqrt(max(cov[1, 1], 0.0))
    if (out.condition_number > ILL_CONDITIONED or params[1] <= 3 * a2_sigma
            or params[1] <= 1e-9 * (abs(params[0]) + abs(params[4]))):
        out.flags.append("period unidentifiable: oscillation amplitude consistent with zero")
    if not res.converged:
        out.flags.append("not converged")
    return out
