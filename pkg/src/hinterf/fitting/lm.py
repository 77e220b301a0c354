"""Levenberg-Marquardt with Marquardt (diagonal) scaling and analytic Jacobians.

Only accepted steps are recorded in ``history``; the cost sequence there is
non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class LMResult:
    params: np.ndarray
    cost: float  # 0.5 * sum(r**2)
    jac: np.ndarray
    residuals: np.ndarray
    n_iter: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)

    @property
    def condition_number(self) -> float:
        """Condition number of J^T J after column equilibration."""
        norms = np.linalg.norm(self.jac, axis=0)
        if np.any(norms == 0):
            return float("inf")
        s = np.linalg.svd(self.jac / norms, compute_uv=False)
        return float("inf") if s[-1] == 0 else float((s[0] / s[-1]) ** 2)

    def covariance(self, scale_by_residual: bool) -> np.ndarray:
        jtj = self.jac.T @ self.jac
        cov = np.linalg.pinv(jtj, rcond=1e-15)
        if scale_by_residual:
            dof = max(self.residuals.size - self.params.size, 1)
            cov = cov * (2.0 * self.cost / dof)
        return cov


def levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray],
                        jacobian: Callable[[np.ndarray], np.ndarray],
                        p0, *, max_iter: int = 500, gtol: float = 1e-8,
                        xtol: float = 1e-13, ftol: float = 1e-15,
                        lam0: float = 1e-3) -> LMResult:
    """Minimise 0.5*|residual(p)|^2.

    Convergence when the largest cosine between the residual vector and a
    Jacobian column drops below ``gtol`` (scale-free gradient test), or when
    accepted steps stop changing the parameters / cost.
    """
    p = np.array(p0, dtype=float)
    r = residual(p)
    cost = 0.5 * float(r @ r)
    lam = lam0
    history = [cost]
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        g = J.T @ r
        col = np.linalg.norm(J, axis=0)
        rn = np.sqrt(2 * cost)
        with np.errstate(divide="ignore", invalid="ignore"):
            cosines = np.where(col > 0, np.abs(g) / (col * rn), 0.0)
        if np.max(cosines) < gtol:
            converged, message = True, "gradient tolerance reached"
            break
        diag = np.maximum(col**2, 1e-300)
        accepted = False
        while lam < 1e16:
            A = np.vstack([J, np.diag(np.sqrt(lam * diag))])
            rhs = np.concatenate([-r, np.zeros(p.size)])
            step = np.linalg.lstsq(A, rhs, rcond=None)[0]
            p_new = p + step
            r_new = residual(p_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # stalled at rounding level; accept only if the gradient is already small
            converged = bool(np.max(cosines) < 1e-4)
            message = "no further decrease possible"
            break
        rel_step = np.linalg.norm(step) / (np.linalg.norm(p) + xtol)
        rel_drop = (cost - cost_new) / cost
        p, r, cost = p_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if rel_step < xtol or rel_drop < ftol:
            converged, message = True, "step or cost change below tolerance"
            break
    J = jacobian(p)
    return LMResult(p, cost, J, r, it, converged, message, history)
