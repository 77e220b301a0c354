"""Scenario configuration (YAML or JSON) and unit handling.

Lengths may be given in millimetres or already dimensionless; the mandatory
``units`` key says which. Everything is converted to x = k0*z on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import BeamParameters, DimensionlessConstants, ValidationError, derive_constants
from .interferogram import PoissonNoise
from .io import complex_from
from .perturbation import ExperimentGeometry, FieldGeometry, Profile, profile_from_dict

UNITS = ("mm", "dimensionless")

# profile keys that carry a length
_LENGTH_KEYS = {
    "gaussian": ("center", "sigma"),
    "lorentzian": ("center", "gamma"),
    "tophat": ("left", "right"),
    "expdecay": ("edge", "scale"),
    "tabulated": ("x",),
}


class ConfigError(ValueError):
    """Invalid or incomplete scenario configuration."""


@dataclass
class ScenarioConfig:
    beam: BeamParameters
    constants: DimensionlessConstants
    geometry: ExperimentGeometry
    p1: Profile
    p2: Profile
    units: str
    field_geom: FieldGeometry | None = None
    s0: complex = 1.0
    p0: complex = 0.0
    K: float | None = 1.0
    peak_counts: float | None = None
    background: float = 0.0
    exposure: float = 1.0
    noise_seed: int | None = None
    scan_d: float | None = None
    scan_u_e: np.ndarray | None = None
    u_i: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def beta(self) -> float:
        return self.constants.beta

    @property
    def noise(self) -> PoissonNoise | None:
        if self.noise_seed is None:
            return None
        return PoissonNoise(self.noise_seed, self.exposure)


def _grid(spec, name: str) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            lo = float(spec.get("min", 0.0))
            hi = float(spec["max"])
            n = int(spec.get("points", 64))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: grid needs max (and optional min, points): {exc}") from None
        if n < 2 or not hi > lo:
            raise ConfigError(f"{name}: need points >= 2 and max > min")
        return np.linspace(lo, hi, n)
    try:
        return np.asarray([float(v) for v in spec])
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a list of numbers or a {{min, max, points}} map") from None


def _convert_profile(spec: dict, to_x) -> dict:
    spec = dict(spec)
    shape = str(spec.get("shape", "")).lower()
    if shape == "sum":
        spec["terms"] = [_convert_profile(t, to_x) for t in spec.get("terms", [])]
        return spec
    for key in _LENGTH_KEYS.get(shape, ()):
        if key in spec:
            v = spec[key]
            spec[key] = [to_x(float(t)) for t in v] if isinstance(v, list) else to_x(float(v))
    return spec


def load_config(path, units: str | None = None) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw, units)


def parse_config(raw: dict, units: str | None = None) -> ScenarioConfig:
    try:
        return _parse(raw, units)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc!r}") from None


def _parse(raw: dict, units_flag: str | None) -> ScenarioConfig:
    units = raw.get("units")
    if units is None:
        units = units_flag
    elif units_flag is not None and units_flag != units:
        raise ConfigError(f"--units {units_flag} contradicts config units {units!r}")
    if units not in UNITS:
        raise ConfigError(f"units must be one of {UNITS} (set the 'units' key)")

    beam_raw = raw.get("beam")
    if not isinstance(beam_raw, dict) or "v_a" not in beam_raw:
        raise ConfigError("beam.v_a (m/s) is required")
    beam = BeamParameters(**{k: float(v) for k, v in beam_raw.items()})
    const = derive_constants(beam)
    if units == "mm":
        def to_x(v):
            return v * 1e-3 * const.k0
    else:
        def to_x(v):
            return v

    g = raw.get("geometry")
    if not isinstance(g, dict):
        raise ConfigError("geometry section is required")
    for key in ("xi0", "x_star"):
        if key not in g:
            raise ConfigError(f"geometry.{key} is required")
    ell = _grid(g.get("ell", {"max": 4 * math.pi if units == "dimensionless"
                              else 4 * math.pi / (1e-3 * const.k0), "points": 64}),
                "geometry.ell")
    geometry = ExperimentGeometry(to_x(float(g["xi0"])), to_x(float(g["x_star"])),
                                  to_x(float(g.get("d0", 0.0))), tuple(to_x(ell)))

    profs = raw.get("profiles")
    if not isinstance(profs, dict) or "p1" not in profs or "p2" not in profs:
        raise ConfigError("profiles.p1 and profiles.p2 are required")
    p1 = profile_from_dict(_convert_profile(profs["p1"], to_x))
    p2 = profile_from_dict(_convert_profile(profs["p2"], to_x))

    field_geom = None
    if raw.get("field") is not None:
        f = dict(raw["field"])
        if str(f.get("gap", "uniform")).lower() == "general":
            f["x"] = [to_x(float(v)) for v in f["x"]]
            f["d"] = [to_x(float(v)) for v in f["d"]]
            f["lam"] = [[to_x(float(v)) for v in row] for row in f["lam"]]
        field_geom = FieldGeometry.from_dict(f)

    amps = raw.get("amplitudes", {}) or {}
    s0 = complex_from(amps.get("s0", 1.0))
    p0 = complex_from(amps.get("p0", 0.0))
    if s0 == 0:
        raise ConfigError("amplitudes.s0 must be non-zero")

    scale = raw.get("scale", {}) or {}
    if "K" in scale and "peak_counts" in scale:
        raise ConfigError("give either scale.K or scale.peak_counts, not both")
    K = float(scale["K"]) if "K" in scale else None
    peak_counts = float(scale["peak_counts"]) if "peak_counts" in scale else None
    if K is None and peak_counts is None:
        K = 1.0
    if (K is not None and not K > 0) or (peak_counts is not None and not peak_counts > 0):
        raise ConfigError("scale.K / scale.peak_counts must be positive")
    background = float(scale.get("background", 0.0))
    exposure = float(scale.get("exposure", 1.0))
    if background < 0 or not exposure > 0:
        raise ConfigError("background must be >= 0 and exposure > 0")

    noise = raw.get("noise") or {"kind": "none"}
    kind = str(noise.get("kind", "none")).lower()
    if kind not in ("none", "poisson"):
        raise ConfigError(f"noise.kind must be 'none' or 'poisson', got {kind!r}")
    seed = None
    if kind == "poisson":
        if "seed" not in noise:
            raise ConfigError("noise.seed is required for Poisson noise")
        seed = int(noise["seed"])
        if seed < 0:
            raise ConfigError("noise.seed must be non-negative")

    scan = raw.get("voltage_scan") or {}
    scan_d = to_x(float(scan["d"])) if "d" in scan else None
    u_e = _grid(scan["u_e"], "voltage_scan.u_e") if "u_e" in scan else None
    u_i = float(scan.get("u_i", (raw.get("fcf") or {}).get("u_i", 0.0)))

    return ScenarioConfig(beam, const, geometry, p1, p2, units, field_geom, s0, p0, K,
                          peak_counts, background, exposure, seed, scan_d, u_e, u_i, raw)
