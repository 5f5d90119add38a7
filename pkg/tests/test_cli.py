import csv
import io
import json
import math

import numpy as np
import pytest

from saw_qnm import export
from saw_qnm.cli import main, parse_band, ConfigError
from saw_qnm.export import MODE_COLUMNS, FIELD_COLUMNS, SWEEP_COLUMNS
from saw_qnm.resfit import ResonanceModel, synthetic_trace


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_solve_r9(tmp_path, capsys):
    out = tmp_path / "modes.csv"
    code, stdout, _ = run(["solve", "--catalog", "R9", "--band", "2.9e9:3.3e9", "-o", str(out)], capsys)
    assert code == 0
    assert "top Q_r" in stdout
    table = rows(out.read_text())
    assert tuple(table[0]) == MODE_COLUMNS
    best = max(float(r["q_radiation"]) for r in table)
    assert 225000 / 2 < best < 2 * 225000
    meta = json.loads((tmp_path / "modes.csv.meta.json").read_text())
    assert meta["command"] == "solve" and "package_version" in meta


def test_solve_r1_regression(capsys):
    code, stdout, _ = run(["solve", "--catalog", "R1"], capsys)
    assert code == 0
    table = rows(stdout)
    assert table and all(float(r["q_radiation"]) < 1e4 for r in table)


def test_solve_empty_band(capsys):
    code, stdout, err = run(["solve", "--catalog", "R1", "--band", "1e9:1e9"], capsys)
    assert code == 0
    assert stdout.strip() == ",".join(MODE_COLUMNS)
    assert "no modes" in err


def test_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["solve", "--catalog", "R3", "-o", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["--threads", "3", "solve", "--catalog", "R3", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_field_r9(capsys):
    code, stdout, _ = run(["field", "--catalog", "R9", "--mode", "0", "--band", "2.9e9:3.3e9"], capsys)
    assert code == 0
    table = rows(stdout)
    assert tuple(table[0]) == FIELD_COLUMNS
    x = np.array([float(r["x_m"]) for r in table])
    a = np.array([float(r["abs_A"]) for r in table])
    assert 120e-6 < x[np.argmax(a)] < 167.5e-6


def test_field_missing_mode(capsys):
    code, _, err = run(["field", "--catalog", "R9", "--mode", "100000"], capsys)
    assert code == 3


def test_field_empty_cavity(capsys):
    code, stdout, _ = run(["field", "--cavity-gap-m", "47.5e-6", "--cavity-mirror", "250"], capsys)
    assert code == 0 and len(rows(stdout)) > 1000


def test_sweep_mirror_count(capsys):
    code, stdout, _ = run(["sweep", "--catalog", "R7", "--vary", "n_mirror", "--values", "0,200,250"], capsys)
    assert code == 0
    table = rows(stdout)
    assert tuple(table[0]) == SWEEP_COLUMNS
    q = [float(r["best_q"]) for r in table]
    assert q[0] < q[1] < q[2]


def test_sweep_single_value_matches_solve(capsys):
    code, stdout, _ = run(["sweep", "--catalog", "R3", "--vary", "n_mirror", "--values", "100"], capsys)
    sweep = rows(stdout)
    code2, stdout2, _ = run(["solve", "--catalog", "R3"], capsys)
    best = max(rows(stdout2), key=lambda r: float(r["q_radiation"]))
    assert float(sweep[0]["best_q"]) == float(best["q_radiation"])
    assert float(sweep[0]["f0_hz"]) == float(best["frequency_hz"])


def test_sweep_catalog_all(capsys):
    code, stdout, _ = run(["--threads", "2", "sweep", "--catalog-all"], capsys)
    assert code == 0
    assert [r["label"] for r in rows(stdout)] == [f"R{k}" for k in range(1, 10)]


def test_sweep_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("label: small\nstrip_reflectance: 0.05\nrecipe:\n  n_total: 80\n  n_mirror: 20\n")
    code, stdout, _ = run(["sweep", "--config", str(cfg), "--vary", "strip_reflectance", "--values", "0.03,0.05"],
                          capsys)
    assert code == 0
    assert [float(r["value"]) for r in rows(stdout)] == [0.03, 0.05]


@pytest.mark.parametrize("argv", [
    ["sweep", "--vary", "bogus", "--values", "1"],
    ["sweep", "--vary", "n_mirror", "--values", ""],
    ["sweep", "--vary", "n_mirror", "--values", "1,x"],
    ["sweep", "--vary", "n_mirror", "--values", "300"],
    ["solve", "--catalog", "R42"],
    ["solve", "--catalog", "R9", "--band", "3e9"],
    ["solve", "--catalog", "R9", "--grid-points", "1"],
    ["--threads", "0", "catalog"],
    ["fit"],
])
def test_config_errors(argv, capsys):
    assert main(argv) == 2


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("recipe: {n_total: 10, n_mirror: 7}\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    cfg.write_text("recipe: [unclosed\n")
    assert main(["solve", "--config", str(cfg)]) == 2


def test_io_errors(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 4
    assert main(["catalog", "-o", str(tmp_path / "no" / "such" / "dir.csv")]) == 4
    assert main(["fit", "--input", str(tmp_path / "missing.csv")]) == 4


def test_solve_from_segment_config(tmp_path, capsys):
    cfg = tmp_path / "slab.yaml"
    cfg.write_text("v0_m_per_s: 3000\nsegments:\n  - [0.3e-6, 1, gap]\n  - [1.0e-6, 2, strip]\n  - [0.3e-6, 1, gap]\n")
    code, stdout, _ = run(["solve", "--config", str(cfg), "--band", "0.375e9:4.125e9"], capsys)
    assert code == 0
    q = sorted(float(r["q_radiation"]) for r in rows(stdout))
    assert q == pytest.approx([math.pi * k / (2 * math.log(3)) for k in range(1, 6)], rel=1e-8)


def test_analytics(capsys):
    code, stdout, _ = run(["analytics", "--qr", "225000", "--qm", "100000"], capsys)
    assert code == 0
    data = json.loads(stdout)
    assert data["q_total"] == pytest.approx(69231, abs=1)
    assert data["q_grating"] is None


def test_analytics_resonator_and_transverse(capsys):
    code, stdout, _ = run(["analytics", "--mode", "resonator", "--d-mirror-gap-m", "47.5e-6", "--ng", "250",
                           "--n-eff", "1.009", "--aperture-m", "12e-6"], capsys)
    data = json.loads(stdout)
    assert data["j_max"] == 3
    assert round(data["alpha_c_deg"]) == 82
    assert data["q_total"] < data["q_grating"]


def test_fit_roundtrip(tmp_path, capsys):
    true = ResonanceModel(3.1e9, 61000.0, 40000.0, 0.2, 0.8, 50e-9, 1.0)
    trace = synthetic_trace(true)
    src = tmp_path / "synthetic.csv"
    src.write_text(export.s11_csv(trace.frequencies, trace.s11))
    out = tmp_path / "fit.json"
    assert main(["fit", "--input", str(src), "-o", str(out)]) == 0
    model = json.loads(out.read_text())["model"]
    for k in ("f0", "q_internal", "q_external", "amplitude", "delay"):
        assert model[k] == pytest.approx(getattr(true, k), rel=1e-6)
    for k in ("phi0", "phase_offset"):
        assert model[k] == pytest.approx(getattr(true, k), abs=1e-6)


def test_fit_polar_and_manifest(tmp_path, capsys):
    true = ResonanceModel(3.1e9, 61000.0, 40000.0, 0.0, 0.5, 10e-9, -0.4)
    trace = synthetic_trace(true)
    polar = tmp_path / "p.csv"
    mag_db = 20 * np.log10(np.abs(trace.s11))
    ph = np.degrees(np.angle(trace.s11))
    polar.write_text(export._rows_to_text(("frequency_hz", "mag_db", "phase_deg"),
                                          zip(trace.frequencies, mag_db, ph)))
    code, stdout, _ = run(["fit", "--input", str(polar), "--polar"], capsys)
    assert code == 0
    assert json.loads(stdout)["model"]["q_internal"] == pytest.approx(61000, rel=1e-6)

    flat = tmp_path / "flat.csv"
    flat.write_text(export.s11_csv(trace.frequencies, np.ones(trace.frequencies.size)))
    manifest = tmp_path / "m.csv"
    manifest.write_text("path,temperature_k,label,polar\np.csv,0.015,cold,1\nflat.csv,4,flat,0\n")
    code, stdout, _ = run(["--threads", "2", "fit", "--manifest", str(manifest)], capsys)
    assert code == 0
    out = json.loads(stdout)["rows"]
    assert [r["metadata"]["label"] for r in out] == ["cold", "flat"]
    assert out[1]["error"] and out[0]["model"]["q_internal"] == pytest.approx(61000, rel=1e-6)


def test_fit_no_resonance(tmp_path, capsys):
    f = np.linspace(3e9, 3.1e9, 100)
    src = tmp_path / "flat.csv"
    src.write_text(export.s11_csv(f, np.ones(100)))
    assert main(["fit", "--input", str(src)]) == 3


def test_catalog(capsys):
    code, stdout, _ = run(["catalog"], capsys)
    table = rows(stdout)
    assert [r["label"] for r in table] == [f"R{k}" for k in range(1, 10)]
    assert table[8]["n_total"] == "600" and table[8]["n_mirror"] == "250"


def test_parse_band():
    assert parse_band("1e9:2e9") == (1e9, 2e9)
    assert parse_band(None) is None
    with pytest.raises(ConfigError):
        parse_band("1e9-2e9")


def test_json_nonfinite_is_null():
    assert json.loads(export.dumps_json({"a": math.inf, "b": [math.nan, 1.0]})) == {"a": None, "b": [None, 1.0]}
