"""Command-line front end.

    hinterf simulate --config scen.yaml --mode interferogram --out run/
    hinterf fit run/interferogram.csv --model standard --out run/
    hinterf fcf run/scan_a.csv run/scan_b.csv --out run/
    hinterf diagnose run/*_fit_standard.json
    hinterf check-geometry --config scen.yaml

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 degenerate inversion.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .core import ValidationError
from .fitting import (
    DegenerateDataError,
    DegenerateSystemError,
    InconsistentSystemError,
    RunSummary,
    diagnose,
    extract,
    fit_corrected,
    fit_legacy,
    fit_standard,
    fit_voltage_scan,
    solve_fcf,
)
from .interferogram import (
    FcfModel,
    Zeta0Table,
    exact_intensity,
    fcf_intensity,
    g_function,
    synthesize,
    zeta0,
)
from .io import (
    DatasetError,
    atomic_write_text,
    csv_text,
    json_text,
    read_csv_columns,
    read_json,
    read_metadata,
)
from .perturbation import ExperimentGeometry, FieldGeometry, is_narrow
from .solver import IntegrationError, QuadratureError, check_collimator_distance, compute_integrals

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DEGENERATE = 0, 2, 3, 4

MODES = ("interferogram", "voltage-scan", "fcf-distorted")
MODELS = ("standard", "corrected", "legacy", "quadratic")
PLOT_POINTS = 512


class NumericalFailure(RuntimeError):
    """A fit or integration did not produce a trustworthy result."""


# ---------------------------------------------------------------------------
# helpers


def _base_metadata(cfg: ScenarioConfig, mode: str) -> dict:
    g = cfg.geometry
    return {
        "mode": mode,
        "units": cfg.units,
        "v_a": cfg.beam.v_a,
        "nu0": cfg.beam.nu0,
        "tau": cfg.beam.tau,
        "beta": cfg.beta,
        "k0": cfg.constants.k0,
        "R": cfg.constants.R,
        "xi0": g.xi0,
        "x_star": g.x_star,
        "d0": g.d0,
        "s0": cfg.s0,
        "p0": cfg.p0,
        "p1": cfg.p1.to_dict(),
        "p2": cfg.p2.to_dict(),
        "field": cfg.field_geom.to_dict() if cfg.field_geom else None,
        "background": cfg.background,
        "exposure": cfg.exposure,
        "noise": cfg.noise.to_dict() if cfg.noise else {"kind": "none"},
        "seed": cfg.noise_seed,
        "version": __version__,
    }


def _scale_to_peak(cfg: ScenarioConfig, unit_curve: np.ndarray) -> float:
    if cfg.K is not None:
        return cfg.K
    top = float(np.max(unit_curve))
    if not top > 0:
        raise ConfigError("cannot scale to peak_counts: the model curve is identically zero")
    return cfg.peak_counts / top


def _require_field(cfg: ScenarioConfig, mode: str) -> FieldGeometry:
    if cfg.field_geom is None:
        raise ConfigError(f"mode {mode} needs a 'field' section")
    return cfg.field_geom


def _simulate_interferogram(cfg: ScenarioConfig, dense: bool):
    g = cfg.geometry
    if not g.ell_grid:
        raise ConfigError("geometry.ell grid is empty")
    ell = np.asarray(g.ell_grid)

    def curve(ell_pts):
        return np.array([exact_intensity(cfg.p1, cfg.p2, g, g.d0 + l, cfg.beta, cfg.s0, cfg.p0)
                         for l in ell_pts])

    unit = curve(ell)
    K = _scale_to_peak(cfg, unit)
    expected = K * unit + cfg.background
    cols = {"ell": ell, "counts": synthesize(expected, cfg.noise), "expected": expected}
    plot = None
    if dense:
        ell_d = np.linspace(ell[0], ell[-1], PLOT_POINTS)
        plot = {"ell": ell_d, "expected": K * curve(ell_d) + cfg.background}
    return cols, {"K": K, "ell_points": int(ell.size)}, plot


def _simulate_voltage_scan(cfg: ScenarioConfig, dense: bool):
    fg = _require_field(cfg, "voltage-scan")
    if cfg.scan_d is None or cfg.scan_u_e is None:
        raise ConfigError("mode voltage-scan needs voltage_scan.d and voltage_scan.u_e")
    g, d = cfg.geometry, cfg.scan_d
    if not d > 0:
        raise ConfigError("voltage_scan.d must be positive")
    psi_d = fg.gap_model.psi_profile(d)
    u_e = np.asarray(cfg.scan_u_e)

    def curve(u_pts):
        return np.array([exact_intensity(cfg.p1, cfg.p2, g, d, cfg.beta, cfg.s0, cfg.p0,
                                         extra=psi_d.scaled(float(u + cfg.u_i)))
                         for u in u_pts])

    unit = curve(u_e)
    K = _scale_to_peak(cfg, unit)
    expected = K * unit + cfg.background
    zeta = zeta0(fg, g, d, cfg.beta)
    meta = {"K": K, "d": d, "u_i": cfg.u_i, "zeta0": zeta,
            "G": float(g_function(d, cfg.beta, abs(zeta) ** 2))}
    cols = {"u_e": u_e, "counts": synthesize(expected, cfg.noise), "expected": expected}
    plot = None
    if dense:
        u_d = np.linspace(u_e.min(), u_e.max(), PLOT_POINTS)
        plot = {"u_e": u_d, "expected": K * curve(u_d) + cfg.background}
    return cols, meta, plot


def _simulate_fcf(cfg: ScenarioConfig, dense: bool):
    fg = _require_field(cfg, "fcf-distorted")
    g = cfg.geometry
    if not g.ell_grid:
        raise ConfigError("geometry.ell grid is empty")
    if not g.d0 > 0:
        raise ConfigError("mode fcf-distorted needs geometry.d0 > 0 (zeta0 is singular at d = 0)")
    ints = compute_integrals(cfg.p1, cfg.p2, g, g.d0, cfg.s0, cfg.p0, cfg.beta)
    d = g.d_grid
    table = Zeta0Table(fg, g, cfg.beta, float(d[0]), float(d[-1]))
    fcf = FcfModel(cfg.u_i, table)

    def curve(d_pts):
        return np.array([fcf_intensity(ints.z10, ints.z20, fcf.zeta0_of_d(dk), dk, cfg.beta,
                                       fcf.u_i, 1.0) for dk in d_pts])

    unit = curve(d)
    K = _scale_to_peak(cfg, unit)
    expected = K * unit + cfg.background
    ell = np.asarray(g.ell_grid)
    cols = {"ell": ell, "counts": synthesize(expected, cfg.noise), "expected": expected}
    meta = {"K": K, "u_i": cfg.u_i, "z10": ints.z10, "z20": ints.z20,
            "zeta0_table_error": table.max_error}
    plot = None
    if dense:
        ell_d = np.linspace(ell[0], ell[-1], PLOT_POINTS)
        plot = {"ell": ell_d, "expected": K * curve(g.d0 + ell_d) + cfg.background}
    return cols, meta, plot


def _write_run_record(out: Path, cfg_raw: dict, argv: list[str], outputs: list[Path]) -> Path:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    ts = datetime.fromtimestamp(int(epoch) if epoch else time.time(), tz=timezone.utc)
    record = {
        "command": argv,
        "config": cfg_raw,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "timestamp": ts.isoformat(),
    }
    path = out / "run_record.json"
    atomic_write_text(path, json_text(record))
    return path


def _write_all(files: dict[Path, str]) -> list[Path]:
    """Write prepared file bodies; if any write fails, remove the ones already written."""
    done: list[Path] = []
    try:
        for path, body in files.items():
            atomic_write_text(path, body)
            done.append(path)
    except BaseException:
        for p in done:
            p.unlink(missing_ok=True)
        raise
    return done


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.units)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.noise_seed = args.seed
    mode = args.mode
    if mode == "interferogram":
        cols, extra, plot = _simulate_interferogram(cfg, args.emit_plot_data)
    elif mode == "voltage-scan":
        cols, extra, plot = _simulate_voltage_scan(cfg, args.emit_plot_data)
    else:
        cols, extra, plot = _simulate_fcf(cfg, args.emit_plot_data)

    stem = args.name or mode.replace("-", "_")
    out = Path(args.out)
    meta = {**_base_metadata(cfg, mode), **extra}
    files = {out / f"{stem}.csv": csv_text(cols), out / f"{stem}.json": json_text(meta)}
    if plot is not None:
        files[out / f"{stem}_model.csv"] = csv_text(plot)
    written = _write_all(files)
    written.append(_write_run_record(out, cfg.raw, args.argv, written))
    for p in written:
        print(p)
    return EXIT_OK


def _dataset_summary(path: Path, meta: dict) -> dict:
    keys = ("mode", "units", "v_a", "beta", "k0", "R", "xi0", "x_star", "d0", "d", "seed", "K",
            "u_i")
    return {"path": str(path), **{k: meta[k] for k in keys if k in meta}}


def _resolve_beta(args, meta: dict) -> float:
    beta = args.beta if args.beta is not None else meta.get("beta")
    if beta is None:
        raise ConfigError("beta is not in the dataset metadata; pass --beta")
    beta = float(beta)
    if not beta > 0:
        raise ConfigError("beta must be positive")
    return beta


def cmd_fit(args) -> int:
    path = Path(args.dataset)
    meta = read_metadata(path)
    model = args.model
    out = Path(args.out) if args.out else path.parent
    stem = f"{path.stem}_fit_{model}"
    report: dict = {"dataset": _dataset_summary(path, meta)}
    plot = None

    if model == "quadratic":
        cols = read_csv_columns(path, ("u_e", "counts"))
        fit = fit_voltage_scan(cols["u_e"], cols["counts"], weighting=args.weighting)
        x, y, yfit = cols["u_e"], cols["counts"], fit(cols["u_e"])
        report.update(model="quadratic", **fit.to_dict())
        if args.emit_plot_data:
            xd = np.linspace(x.min(), x.max(), PLOT_POINTS)
            plot = {"u_e": xd, "model": fit(xd)}
        xname = "u_e"
        converged = True
    elif model == "legacy":
        cols = read_csv_columns(path, ("counts",))
        if "L" in cols:
            L = cols["L"]
        elif "ell" in cols and "k0" in meta:
            L = cols["ell"] / float(meta["k0"]) * 1e3
        else:
            raise DatasetError(f"{path}: legacy fit needs an L column (mm) or ell plus k0 metadata")
        if "R" not in meta:
            raise ConfigError("legacy fit needs R in the dataset metadata")
        fit = fit_legacy(L, cols["counts"], float(meta["R"]) * 1e3, weighting=args.weighting)
        x, y, yfit = L, cols["counts"], fit.model(L)
        report.update(fit.to_dict(), length_unit="mm")
        if args.emit_plot_data:
            xd = np.linspace(L.min(), L.max(), PLOT_POINTS)
            plot = {"L": xd, "model": fit.model(xd)}
        xname = "L"
        converged = fit.converged
    else:
        beta = _resolve_beta(args, meta)
        cols = read_csv_columns(path, ("ell", "counts"))
        ell, y = cols["ell"], cols["counts"]
        if model == "standard":
            fit = fit_standard(ell, beta, y, weighting=args.weighting)
            report.update(fit.to_dict())
        else:
            fit = fit_corrected(ell, beta, y, weighting=args.weighting)
            report.update(fit.to_dict())
            report["extraction"] = extract(fit, beta).to_dict()
        report["beta"] = beta
        yfit = fit.model(ell)
        x = ell
        if args.emit_plot_data:
            xd = np.linspace(ell.min(), ell.max(), PLOT_POINTS)
            plot = {"ell": xd, "model": fit.model(xd)}
        xname = "ell"
        converged = fit.converged

    if not converged:
        raise NumericalFailure(f"fit did not converge: {report.get('message', '')}")
    sig = np.sqrt(np.maximum(y, 1.0)) if args.weighting == "poisson" else np.ones_like(y)
    resid = {xname: x, "counts": y, "model": yfit, "residual": (y - yfit) / sig}
    files = {out / f"{stem}.json": json_text(report),
             out / f"{stem}_residuals.csv": csv_text(resid)}
    if plot is not None:
        files[out / f"{stem}_curve.csv"] = csv_text(plot)
    for p in _write_all(files):
        print(p)
    return EXIT_OK


def _scan_G(path: Path, meta: dict) -> tuple[float, float]:
    """(d, G(d)) for a voltage-scan dataset, recomputing G by quadrature when possible."""
    try:
        d = float(meta["d"])
        beta = float(meta["beta"])
    except KeyError as exc:
        raise DatasetError(f"{path.with_suffix('.json')}: metadata lacks {exc}") from None
    if meta.get("field") and "xi0" in meta and "x_star" in meta:
        geom = ExperimentGeometry(float(meta["xi0"]), float(meta["x_star"]))
        z = zeta0(FieldGeometry.from_dict(meta["field"]), geom, d, beta)
        return d, float(g_function(d, beta, abs(z) ** 2))
    if "G" in meta:
        return d, float(meta["G"])
    raise DatasetError(f"{path}: metadata needs field geometry (or G) to evaluate G(d)")


def cmd_fcf(args) -> int:
    runs = []
    for p in (Path(args.scan1), Path(args.scan2)):
        meta = read_metadata(p)
        cols = read_csv_columns(p, ("u_e", "counts"))
        d, G = _scan_G(p, meta)
        runs.append((p, d, G, fit_voltage_scan(cols["u_e"], cols["counts"],
                                               weighting=args.weighting)))
    (p1, d1, g1, f1), (p2, d2, g2, f2) = runs
    if d1 == d2:
        raise DegenerateSystemError(f"both scans were taken at d = {d1}: the system is singular")
    sol = solve_fcf((f1, g1), (f2, g2), rtol=args.rtol)
    report = {
        "scans": [{"path": str(p), "d": d, "G": G, "fit": f.to_dict()}
                  for p, d, G, f in runs],
        **sol.to_dict(),
    }
    text = json_text(report)
    if args.out:
        path = Path(args.out) / "fcf_solution.json"
        atomic_write_text(path, text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    runs = []
    for p in args.reports:
        rep = read_json(Path(p))
        if rep.get("model") != "standard":
            raise ConfigError(f"{p}: diagnose needs standard-model fit reports")
        try:
            runs.append(RunSummary.from_report(rep, label=Path(p).stem))
        except ValidationError as exc:
            raise DatasetError(f"{p}: {exc}") from None
    if args.z10 is not None or args.z20 is not None:
        if args.z10 is None or args.z20 is None:
            raise ConfigError("--z10 and --z20 must be given together")
        for r in runs:
            r.z10_mod, r.z20_mod = args.z10, args.z20
    report = diagnose(runs)
    sys.stdout.write(report.to_text())
    if args.out:
        path = Path(args.out) / "diagnosis.json"
        atomic_write_text(path, json_text(report.to_dict()))
        print(path)
    return EXIT_OK


def cmd_check_geometry(args) -> int:
    cfg = load_config(args.config, args.units)
    g = cfg.geometry
    ints = compute_integrals(cfg.p1, cfg.p2, g, g.d0, cfg.s0, cfg.p0, cfg.beta)
    check = check_collimator_distance(g.xi0, cfg.beta, abs(ints.z10))
    report = {
        "xi0": g.xi0,
        "beta": cfg.beta,
        "z10_mod": abs(ints.z10),
        "z20_mod": abs(ints.z20),
        "collimator_threshold": check.threshold,
        "margin_factor": check.margin_factor,
        "collimator_far_enough": check.satisfied,
        "p1_narrow": is_narrow(cfg.p1, g, cfg.beta),
        "p2_narrow": is_narrow(cfg.p2, g, cfg.beta),
    }
    text = json_text(report)
    if args.out:
        path = Path(args.out) / "geometry_check.json"
        atomic_write_text(path, text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hinterf", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset from a scenario config")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=MODES, default="interferogram")
    s.add_argument("--seed", type=int, help="Poisson seed; overrides the config and enables noise")
    s.add_argument("--out", default=".")
    s.add_argument("--name", help="output file stem (default: the mode)")
    s.add_argument("--units", choices=("mm", "dimensionless"))
    s.add_argument("--emit-plot-data", action="store_true")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a dataset CSV")
    f.add_argument("dataset")
    f.add_argument("--model", choices=MODELS, default="standard")
    f.add_argument("--beta", type=float)
    f.add_argument("--weighting", choices=("poisson", "none"), default="poisson")
    f.add_argument("--out", help="output directory (default: next to the dataset)")
    f.add_argument("--emit-plot-data", action="store_true")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("fcf", help="solve two voltage scans for u_i and |z|^2")
    c.add_argument("scan1")
    c.add_argument("scan2")
    c.add_argument("--weighting", choices=("poisson", "none"), default="poisson")
    c.add_argument("--rtol", type=float, default=1e-6,
                   help="allowed relative mismatch of |z|^2 between the runs")
    c.add_argument("--out")
    c.set_defaults(func=cmd_fcf)

    g = sub.add_parser("diagnose", help="classify standard-fit reports into a scenario")
    g.add_argument("reports", nargs="+")
    g.add_argument("--z10", type=float, help="|z10| from voltage scans")
    g.add_argument("--z20", type=float, help="|z20| from voltage scans")
    g.add_argument("--out")
    g.set_defaults(func=cmd_diagnose)

    k = sub.add_parser("check-geometry", help="collimator-distance and narrowness checks")
    k.add_argument("--config", required=True)
    k.add_argument("--units", choices=("mm", "dimensionless"))
    k.add_argument("--out")
    k.set_defaults(func=cmd_check_geometry)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (DegenerateSystemError, DegenerateDataError) as exc:
        print(f"error: degenerate inversion: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, DatasetError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, InconsistentSystemError, IntegrationError, QuadratureError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
