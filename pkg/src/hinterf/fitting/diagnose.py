"""Classify a set of interferogram runs into the four interpretation scenarios.

Scenarios, checked in order:

``irreproducible``        fitted parameters scatter between nominally identical runs
``poor_standard_fit``     reproducible, but the standard function does not fit
``modulation_mismatch``   good standard fit, modulation far from 2 exp(beta d0)
``standard_consistent``   modulation close to 2 exp(beta d0)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ValidationError
from .curves import FitResultF0

IRREPRODUCIBLE = "irreproducible"
POOR_STANDARD_FIT = "poor_standard_fit"
MODULATION_MISMATCH = "modulation_mismatch"
STANDARD_CONSISTENT = "standard_consistent"

RECOMMENDATIONS = {
    IRREPRODUCIBLE: (
        "Find the uncontrolled factor first. Measure voltage scans at two electrode "
        "separations to estimate any internal (charged-film) voltage, and repeat both "
        "measurements at several beam intensities. A large or drifting internal voltage "
        "points to inadequate vacuum."
    ),
    POOR_STANDARD_FIT: (
        "The distortion is what a global charged-film field would produce. Measure voltage "
        "scans at two separations and solve for the internal voltage u_i."
    ),
    MODULATION_MISMATCH: (
        "A global film field is unlikely. Measure voltage scans at four separations to obtain "
        "moduli and phases of z10 and z20, and repeat at different beam intensities; "
        "compare 2|z20|/|z10| exp(beta d0) with the measured modulation."
    ),
    STANDARD_CONSISTENT: (
        "Consistent with identical regular slit fields. Confirm with voltage scans under the "
        "same conditions: |z10| = |z20| independent of beam intensity supports this reading, "
        "unequal values suggest local film charges. Repeat with a second slit geometry."
    ),
}


@dataclass
class RunSummary:
    a1: float
    a2: float
    a3: float
    reduced_chi2: float
    d0: float
    beta: float
    label: str = ""
    z10_mod: float | None = None
    z20_mod: float | None = None

    @property
    def mu(self) -> float:
        return self.a2 / self.a1

    @classmethod
    def from_fit(cls, fit: FitResultF0, d0: float, label: str = "", **kw) -> "RunSummary":
        return cls(fit.a1, fit.a2, fit.a3, fit.reduced_chi2, d0, fit.beta, label, **kw)

    @classmethod
    def from_report(cls, report: dict, label: str = "") -> "RunSummary":
        """Build from a standard-fit JSON report (as written by the CLI)."""
        try:
            p = report["params"]
            return cls(p["a1"], p["a2"], p["a3"], report["reduced_chi2"],
                       report["dataset"]["d0"], report["beta"], label or report.get("label", ""))
        except KeyError as exc:
            raise ValidationError(f"fit report lacks field {exc}") from None


@dataclass
class DiagnoseThresholds:
    scatter: float = 0.05  # relative spread of a1, a2, mu; absolute spread of a3 (rad)
    reduced_chi2: float = 2.0
    mu_deviation: float = 0.10
    z_equality: float = 0.10


@dataclass
class ScenarioReport:
    scenario: str
    evidence: dict
    recommendation: str
    missing: list[str] = field(default_factory=list)
    z_equal: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        for k, v in self.evidence.items():
            lines.append(f"  {k}: {v:.6g}" if isinstance(v, float) else f"  {k}: {v}")
        if self.z_equal is not None:
            lines.append(f"  |z10| == |z20|: {self.z_equal}")
        for m in self.missing:
            lines.append(f"  missing: {m}")
        lines.append(f"next: {self.recommendation}")
        return "\n".join(lines) + "\n"


def _scatter(runs: list[RunSummary]) -> float:
    def rel_std(v):
        v = np.asarray(v, dtype=float)
        return float(np.std(v, ddof=1) / abs(np.mean(v))) if np.mean(v) != 0 else math.inf

    phases = np.array([r.a3 for r in runs])
    mean_phase = np.angle(np.mean(np.exp(1j * phases)))
    phase_spread = float(np.std(np.angle(np.exp(1j * (phases - mean_phase))), ddof=1))
    return max(rel_std([r.a1 for r in runs]), rel_std([r.a2 for r in runs]),
               rel_std([r.mu for r in runs]), phase_spread)


def diagnose(runs: list[RunSummary],
             thresholds: DiagnoseThresholds | None = None) -> ScenarioReport:
    if not runs:
        raise ValidationError("diagnose needs at least one interferogram fit")
    th = thresholds or DiagnoseThresholds()
    missing: list[str] = []
    evidence: dict = {"n_runs": len(runs)}

    if len(runs) >= 2:
        scatter = _scatter(runs)
        evidence["parameter_scatter"] = scatter
        if scatter > th.scatter:
            return ScenarioReport(IRREPRODUCIBLE, evidence, RECOMMENDATIONS[IRREPRODUCIBLE],
                                  missing)
    else:
        missing.append("reproducibility not assessed (single run)")

    chi2 = float(np.mean([r.reduced_chi2 for r in runs]))
    evidence["reduced_chi2"] = chi2
    if chi2 > th.reduced_chi2:
        return ScenarioReport(POOR_STANDARD_FIT, evidence, RECOMMENDATIONS[POOR_STANDARD_FIT],
                              missing)

    mu_exp = float(np.mean([r.mu for r in runs]))
    d0 = float(np.mean([r.d0 for r in runs]))
    beta = runs[0].beta
    mu_identical = 2.0 * math.exp(beta * d0)
    deviation = abs(mu_exp / mu_identical - 1.0)
    evidence.update(mu_exp=mu_exp, mu_identical_slits=mu_identical, mu_deviation=deviation)

    z_equal = None
    zs = [(r.z10_mod, r.z20_mod) for r in runs if r.z10_mod and r.z20_mod]
    if zs:
        z10 = float(np.mean([z[0] for z in zs]))
        z20 = float(np.mean([z[1] for z in zs]))
        evidence.update(z10_mod=z10, z20_mod=z20,
                        mu_from_integrals=2 * z20 / z10 * math.exp(beta * d0))
        z_equal = abs(z10 - z20) <= th.z_equality * max(z10, z20)
    else:
        missing.append("no voltage-scan values of |z10|, |z20|")

    scenario = MODULATION_MISMATCH if deviation > th.mu_deviation else STANDARD_CONSISTENT
    return ScenarioReport(scenario, evidence, RECOMMENDATIONS[scenario], missing, z_equal)
