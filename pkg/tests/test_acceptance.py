"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed to the
terminal even under capture) or directly with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import slab_band, slab_omega, slab_spec  # noqa: E402
from saw_qnm.analytics import (  # noqa: E402
    ResonatorGeometry,
    combine,
    combine_crystal,
    q_diffraction,
    q_grating,
    transverse_mode_limit,
)
from saw_qnm.qnm import acoustic_fundamental, end_to_peak_ratio, find_modes, sample_field  # noqa: E402
from saw_qnm.resfit import ResonanceModel, fit_trace, resonance_term, synthetic_trace, wrap_phase  # noqa: E402
from saw_qnm.structure import (  # noqa: E402
    StructureSpec,
    build_empty_cavity,
    catalog_structure,
    central_bragg_frequency,
    recipe_catalog,
    segments_from_pairs,
)
from saw_qnm.tmm import half_step_matrix, total_matrix  # noqa: E402

R9_BAND = (2.9e9, 3.3e9)
LAM = 0.96e-6


def c1_r9_radiation_q():
    spec = catalog_structure("R9")
    t0 = time.perf_counter()
    modes = find_modes(spec, R9_BAND)
    dt = time.perf_counter() - t0
    best = modes.best()
    ok = (best is not None and 3.0e9 <= best.frequency_hz <= 3.3e9
          and 225000 / 2 <= best.q_radiation <= 225000 * 2 and dt < 10.0)
    return ok, f"Q_r = {best.q_radiation:.0f} at {best.frequency_hz / 1e9:.4f} GHz, {dt:.2f} s"


def c2_combined_q():
    best = find_modes(catalog_structure("R9"), R9_BAND).best()
    found = combine_crystal(best.q_radiation, 1e5)
    exact = combine_crystal(225000.0, 1e5)
    ok = 70000 / 2 <= found <= 70000 * 2 and abs(exact - 69231) <= 1
    return ok, f"combined(found) = {found:.0f}, combined(225000) = {exact:.2f}"


def c3_mirror_ordering():
    t0 = time.perf_counter()
    best = {}
    for label, recipe in recipe_catalog():
        spec = catalog_structure(label)
        best[(recipe.n_total, recipe.n_mirror)] = find_modes(spec).best().q_radiation
    dt = time.perf_counter() - t0
    ok = dt < 60.0
    parts = []
    for n in (300, 400, 600):
        qs = [best[k] for k in sorted(best) if k[0] == n]
        ok &= all(a < b for a, b in zip(qs, qs[1:]))
        parts.append(f"N={n}: " + " < ".join(f"{q:.0f}" for q in qs))
    return ok, "; ".join(parts) + f"; {dt:.1f} s"


def c4_localization():
    recipes = dict(recipe_catalog())
    r9, r7 = catalog_structure("R9"), catalog_structure("R7")
    split = central_bragg_frequency(recipes["R9"])
    f9 = acoustic_fundamental(find_modes(r9, R9_BAND), split)
    f7 = acoustic_fundamental(find_modes(r7, R9_BAND), split)
    ratio = end_to_peak_ratio(r7, f7) / end_to_peak_ratio(r9, f9)
    cav = build_empty_cavity(47.5e-6, 250)
    fc = find_modes(cav).best()
    peak_cav = np.abs(sample_field(cav, fc)[1]).max()
    peak_r9 = np.abs(sample_field(r9, f9)[1]).max()
    ok = ratio >= 10.0 and peak_cav < peak_r9
    return ok, (f"end/peak R7 / R9 = {ratio:.3f} (need >= 10); "
                f"normalized peak cavity {peak_cav:.4f} < R9 {peak_r9:.4f}")


def c5_slab_oracle():
    modes = find_modes(slab_spec(), slab_band())
    errs = [abs(m.omega - slab_omega(k)) / abs(slab_omega(k)) for k, m in enumerate(modes, start=1)]
    ok = len(modes) == 5 and max(errs) < 1e-8
    return ok, f"{len(modes)} modes, max relative error {max(errs):.2e}"


def c6_analytic_formulas():
    qd100 = q_diffraction(ResonatorGeometry(aperture_w=100 * LAM, wavelength0=LAM, gamma=0.378))
    qd150 = q_diffraction(ResonatorGeometry(aperture_w=150 * LAM, wavelength0=LAM, gamma=0.378))
    qg = q_grating(ResonatorGeometry(d_mirror_gap=100 * LAM, wavelength0=LAM, r_s=0.02, n_g=1000)).value
    alpha, j_max = transverse_mode_limit(1.009, 0.475e-6, 12e-6)
    ok = (float(f"{qd100:.3g}") == 1.14e5 and float(f"{qd150:.3g}") == 2.56e5 and qg > 1e7
          and round(alpha) == 82 and j_max == 3)
    return ok, f"Q_d = {qd100:.4g}, {qd150:.4g}; Q_g = {qg:.3g}; alpha_c = {alpha:.2f} deg, j_max = {j_max}"


def c7_fit_roundtrips():
    true = ResonanceModel(3.1e9, 61000.0, 40000.0, 0.2, 0.8, 50e-9, 1.0)
    got, _ = fit_trace(synthetic_trace(true))
    worst = 0.0
    for name in ("f0", "q_internal", "q_external", "amplitude", "delay"):
        worst = max(worst, abs(getattr(got, name) / getattr(true, name) - 1))
    for name in ("phi0", "phase_offset"):
        worst = max(worst, abs(wrap_phase(getattr(got, name) - getattr(true, name))))
    qi, qe = [], []
    for seed in range(100):
        m, _ = fit_trace(synthetic_trace(true, snr_db=40, rng=np.random.default_rng(seed)))
        qi.append(m.q_internal)
        qe.append(m.q_external)
    med_qi, med_qe = np.median(qi) / 61000 - 1, np.median(qe) / 40000 - 1
    ok = worst < 1e-6 and abs(med_qi) < 0.01 and abs(med_qe) < 0.01
    return ok, f"noiseless worst {worst:.1e}; 40 dB median bias Q_i {med_qi:+.2%}, Q_e {med_qe:+.2%}"


def c8_invariants():
    checks = {}
    r9 = catalog_structure("R9")
    w = 2 * math.pi * 3.1e9 - 1e5j
    prod = np.prod([half_step_matrix(w, a, b, r9.v0).det() for a, b in zip(r9.segments, r9.segments[1:])])
    checks["det"] = abs(total_matrix(r9, w).det() - prod) < 1e-8 and abs(prod - 1) < 1e-8

    rng = np.random.default_rng(7)
    pairs = [(0.2e-6, 1.0, "gap")]
    for _ in range(30):
        pairs += [(0.24e-6 * (1 + 0.1 * rng.random()), 1.08, "strip"), (0.24e-6 * (1 + 0.3 * rng.random()), 1.0, "gap")]
    spec = StructureSpec(segments_from_pairs(pairs))
    a, b = find_modes(spec, (2e9, 4.5e9)), find_modes(spec.reversed(), (2e9, 4.5e9))
    checks["palindrome"] = len(a) == len(b) > 0 and all(
        abs(m.omega - n.omega) <= 1e-10 * abs(m.omega) for m, n in zip(a, b))

    r3 = catalog_structure("R3")
    base = find_modes(r3, (3.0e9, 3.5e9))
    scaled = find_modes(r3.with_v0(r3.v0 * 1.37), (3.0e9 * 1.37, 3.5e9 * 1.37))
    checks["v0-rescaling"] = len(base) == len(scaled) > 0 and all(
        abs(n.q_radiation / m.q_radiation - 1) < 1e-9 for m, n in zip(base, scaled))

    qs_rng = np.random.default_rng(11)
    checks["harmonic-bound"] = all(
        combine(*q) <= min(q) * (1 + 1e-12) for q in (qs_rng.uniform(1, 1e7, size=4) for _ in range(200)))

    qi, qe = np.random.default_rng(5).uniform(1e3, 1e6, size=(2, 200))
    checks["depth"] = bool(np.all(np.abs(np.abs(resonance_term(3.1e9, 3.1e9, qi, qe, 0.0))
                                         - np.abs(qe - qi) / (qe + qi)) <= 1e-12))
    return all(checks.values()), ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())


CRITERIA = [
    ("1 R9 radiation Q", c1_r9_radiation_q),
    ("2 combined Q", c2_combined_q),
    ("3 mirror ordering", c3_mirror_ordering),
    ("4 localization", c4_localization),
    ("5 slab oracle", c5_slab_oracle),
    ("6 analytic formulas", c6_analytic_formulas),
    ("7 fit roundtrips", c7_fit_roundtrips),
    ("8 invariant suites", c8_invariants),
]


def _line(name, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail}"


@pytest.mark.parametrize("name,check", CRITERIA, ids=[c[0].split()[0] for c in CRITERIA])
def test_criterion(name, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for name, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(_line(name, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
