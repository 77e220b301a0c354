import copy
import json
import math

import numpy as np
import pytest
import yaml

from hinterf.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_OK, main
from hinterf.io import read_csv_columns

BASE = {
    "units": "dimensionless",
    "beam": {"v_a": 2.0e6},
    "geometry": {"xi0": -60.0, "x_star": 60.0, "d0": 0.0,
                 "ell": {"max": 4 * math.pi, "points": 24}},
    "profiles": {"p1": {"shape": "gaussian", "center": 0.0, "sigma": 0.5, "peak": 0.01},
                 "p2": {"shape": "gaussian", "center": 0.0, "sigma": 0.5, "peak": 0.01}},
    "field": {"gap": "uniform"},
    "voltage_scan": {"d": math.pi, "u_e": {"min": -0.5, "max": 0.5, "points": 7}, "u_i": 0.0},
    "scale": {"K": 1.0e9},
    "noise": {"kind": "poisson", "seed": 7},
}


def _config(tmp_path, name="scen.yaml", **updates):
    cfg = copy.deepcopy(BASE)
    for key, value in updates.items():
        if value is None:
            cfg.pop(key, None)
        elif isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def _run(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_dataset_and_sidecar(tmp_path, capsys):
    cfg = _config(tmp_path)
    out = tmp_path / "run"
    assert _run("simulate", "--config", cfg, "--out", out) == EXIT_OK
    cols = read_csv_columns(out / "interferogram.csv")
    assert list(cols) == ["ell", "counts", "expected"]
    assert cols["ell"].size == 24
    assert np.all(cols["counts"] == np.round(cols["counts"]))
    meta = json.loads((out / "interferogram.json").read_text())
    assert meta["beta"] == pytest.approx(0.054791594297, rel=1e-10)
    assert meta["seed"] == 7 and "timestamp" not in meta
    record = json.loads((out / "run_record.json").read_text())
    assert record["command"][0] == "simulate"
    assert str(out / "interferogram.csv") in capsys.readouterr().out


def test_simulate_byte_identical_with_same_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = _config(tmp_path)
    for d in ("a", "b"):
        assert _run("simulate", "--config", cfg, "--out", tmp_path / d, "--seed", 3) == EXIT_OK
    for name in ("interferogram.csv", "interferogram.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rec = json.loads((tmp_path / "a" / "run_record.json").read_text())
    assert rec["timestamp"].startswith("2023-11-14")
    _run("simulate", "--config", cfg, "--out", tmp_path / "c", "--seed", 4)
    assert (tmp_path / "a" / "interferogram.csv").read_bytes() != \
        (tmp_path / "c" / "interferogram.csv").read_bytes()


def test_units_mm_matches_dimensionless(tmp_path):
    dim = _config(tmp_path, "dim.yaml", noise=None)
    assert _run("simulate", "--config", dim, "--out", tmp_path / "dim") == EXIT_OK
    k0_mm = json.loads((tmp_path / "dim" / "interferogram.json").read_text())["k0"] * 1e-3

    def mm(v):
        return v / k0_mm

    p = {"shape": "gaussian", "center": 0.0, "sigma": mm(0.5), "peak": 0.01}
    ell_mm = (np.linspace(0, 4 * math.pi, 24) / k0_mm).tolist()
    cfg_mm = _config(tmp_path, "mm.yaml", units="mm", noise=None,
                     geometry={"xi0": mm(-60.0), "x_star": mm(60.0), "d0": 0.0, "ell": ell_mm},
                     profiles={"p1": p, "p2": p})
    assert _run("simulate", "--config", cfg_mm, "--out", tmp_path / "mm") == EXIT_OK
    a = read_csv_columns(tmp_path / "dim" / "interferogram.csv")
    b = read_csv_columns(tmp_path / "mm" / "interferogram.csv")
    np.testing.assert_allclose(b["ell"], a["ell"], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(b["expected"], a["expected"], rtol=1e-10)


def test_units_flag_conflict(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert _run("simulate", "--config", cfg, "--units", "mm", "--out", tmp_path) == EXIT_CONFIG
    assert "contradicts" in capsys.readouterr().err


def test_units_flag_fills_missing_key(tmp_path):
    cfg = _config(tmp_path, units=None, noise=None)
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "x") == EXIT_CONFIG
    assert _run("simulate", "--config", cfg, "--units", "dimensionless",
                "--out", tmp_path / "x") == EXIT_OK


def test_voltage_scan_is_quadratic(tmp_path):
    cfg = _config(tmp_path, noise=None)
    assert _run("simulate", "--config", cfg, "--mode", "voltage-scan", "--out", tmp_path) == EXIT_OK
    cols = read_csv_columns(tmp_path / "voltage_scan.csv")
    y = cols["expected"]
    assert y.size == 7
    assert np.max(np.abs(np.diff(y, 3))) <= 1e-9 * np.max(np.abs(y))
    meta = json.loads((tmp_path / "voltage_scan.json").read_text())
    assert meta["G"] == pytest.approx(0.0729673, rel=1e-5)


def test_invalid_config_writes_nothing(tmp_path, capsys):
    bad = _config(tmp_path, beam={"v_a": -1.0})
    out = tmp_path / "out"
    assert _run("simulate", "--config", bad, "--out", out) == EXIT_CONFIG
    assert not out.exists() or not any(out.iterdir())
    assert capsys.readouterr().err.startswith("error:")


@pytest.mark.parametrize("updates, message", [
    ({"geometry": {"xi0": 5.0}}, "xi0"),
    ({"profiles": {"p1": {"shape": "spline"}}}, "shape"),
    ({"noise": {"kind": "gaussian"}}, "noise.kind"),
    ({"scale": {"K": 1.0, "peak_counts": 5.0}}, "either"),
    ({"beam": "fast"}, "v_a"),
])
def test_config_errors_exit_2(tmp_path, capsys, updates, message):
    cfg = _config(tmp_path, **updates)
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
    assert message in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert _run("simulate", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == EXIT_CONFIG


def test_fit_standard_round_trip(tmp_path):
    cfg = _config(tmp_path, geometry={"ell": {"max": 4 * math.pi, "points": 48}})
    assert _run("simulate", "--config", cfg, "--out", tmp_path, "--emit-plot-data") == EXIT_OK
    assert read_csv_columns(tmp_path / "interferogram_model.csv")["ell"].size == 512
    assert _run("fit", tmp_path / "interferogram.csv", "--emit-plot-data") == EXIT_OK
    rep = json.loads((tmp_path / "interferogram_fit_standard.json").read_text())
    assert rep["model"] == "standard"
    assert rep["params"]["a2"] / rep["params"]["a1"] == pytest.approx(2.0, rel=0.01)
    assert rep["dataset"]["seed"] == 7
    res = read_csv_columns(tmp_path / "interferogram_fit_standard_residuals.csv")
    assert list(res) == ["ell", "counts", "model", "residual"]
    assert (tmp_path / "interferogram_fit_standard_curve.csv").exists()


@pytest.mark.parametrize("model", ["corrected", "legacy"])
def test_fit_other_models(tmp_path, model):
    cfg = _config(tmp_path, noise=None,
                  geometry={"d0": 2.0, "ell": {"max": 8 * math.pi, "points": 64}})
    _run("simulate", "--config", cfg, "--out", tmp_path)
    assert _run("fit", tmp_path / "interferogram.csv", "--model", model,
                "--weighting", "none") == EXIT_OK
    rep = json.loads((tmp_path / f"interferogram_fit_{model}.json").read_text())
    if model == "corrected":
        assert "extraction" in rep
    else:
        assert rep["length_unit"] == "mm"


def test_fit_quadratic(tmp_path):
    cfg = _config(tmp_path, noise=None)
    _run("simulate", "--config", cfg, "--mode", "voltage-scan", "--out", tmp_path)
    assert _run("fit", tmp_path / "voltage_scan.csv", "--model", "quadratic",
                "--weighting", "none") == EXIT_OK
    rep = json.loads((tmp_path / "voltage_scan_fit_quadratic.json").read_text())
    assert rep["c2"] > 0


def test_fit_malformed_row_names_line(tmp_path, capsys):
    path = tmp_path / "data.csv"
    path.write_text("ell,counts\n0.0,10\n0.5,abc\n")
    assert _run("fit", path, "--beta", 0.05) == EXIT_CONFIG
    assert "data.csv:3" in capsys.readouterr().err
    assert not (tmp_path / "data_fit_standard.json").exists()


def test_fit_needs_beta(tmp_path, capsys):
    path = tmp_path / "data.csv"
    path.write_text("ell,counts\n0.0,10\n0.5,11\n1.0,12\n")
    assert _run("fit", path) == EXIT_CONFIG
    assert "--beta" in capsys.readouterr().err


def test_fit_flat_data_is_degenerate(tmp_path):
    path = tmp_path / "flat.csv"
    ell = np.linspace(0, 4 * math.pi, 32)
    path.write_text("ell,counts\n" + "".join(f"{x},100\n" for x in ell))
    assert _run("fit", path, "--beta", 0.05) == EXIT_DEGENERATE


def _scan(tmp_path, name, d, u_i, half):
    cfg = _config(tmp_path, f"{name}.yaml", noise=None,
                  voltage_scan={"d": d, "u_i": u_i,
                                "u_e": {"min": -half, "max": half, "points": 9}})
    assert _run("simulate", "--config", cfg, "--mode", "voltage-scan", "--name", name,
                "--out", tmp_path) == EXIT_OK
    return tmp_path / f"{name}.csv"


def test_fcf_end_to_end(tmp_path):
    a = _scan(tmp_path, "scan_a", math.pi, 0.01, 0.01)
    b = _scan(tmp_path, "scan_b", 2 * math.pi, 0.01, 1.0)
    assert _run("fcf", a, b, "--weighting", "none", "--rtol", 1e-4, "--out", tmp_path) == EXIT_OK
    sol = json.loads((tmp_path / "fcf_solution.json").read_text())
    assert any(c["u_i"] == pytest.approx(0.01, rel=1e-4) for c in sol["candidates"])


def test_fcf_identical_separation_exit_4(tmp_path, capsys):
    a = _scan(tmp_path, "scan_a", math.pi, 0.0, 0.01)
    assert _run("fcf", a, a) == EXIT_DEGENERATE
    assert "degenerate" in capsys.readouterr().err


def test_diagnose_from_fit_reports(tmp_path, capsys):
    cfg = _config(tmp_path, geometry={"ell": {"max": 4 * math.pi, "points": 48}})
    reports = []
    for seed in (1, 2):
        out = tmp_path / f"r{seed}"
        _run("simulate", "--config", cfg, "--out", out, "--seed", seed)
        _run("fit", out / "interferogram.csv")
        reports.append(out / "interferogram_fit_standard.json")
    capsys.readouterr()
    assert _run("diagnose", *reports, "--z10", 1.0, "--z20", 1.0, "--out", tmp_path) == EXIT_OK
    assert capsys.readouterr().out.startswith("scenario: standard_consistent")
    rep = json.loads((tmp_path / "diagnosis.json").read_text())
    assert rep["z_equal"] is True


def test_diagnose_rejects_other_models(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"model": "legacy"}))
    assert _run("diagnose", path) == EXIT_CONFIG


def test_check_geometry(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert _run("check-geometry", "--config", cfg) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["p1_narrow"] and rep["p2_narrow"]
    assert rep["collimator_threshold"] == pytest.approx(
        math.log(2 / rep["z10_mod"]) / rep["beta"])
