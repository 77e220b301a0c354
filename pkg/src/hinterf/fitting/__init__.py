"""Curve fitting, parameter extraction and the two-run voltage-scan inversion."""

from .curves import (
    DegenerateDataError,
    ExtractedParams,
    FitResult,
    FitResultF0,
    FitResultF1,
    FitResultLegacy,
    extract,
    fit_corrected,
    fit_legacy,
    fit_standard,
    wrap_phase,
)
from .lm import LMResult, levenberg_marquardt
from .voltage import (
    DegenerateSystemError,
    FcfSolution,
    InconsistentSystemError,
    QuadraticFit,
    fit_voltage_scan,
    recover_slit_integral,
    solve_fcf,
)
from .diagnose import DiagnoseThresholds, RunSummary, ScenarioReport, diagnose
