"""One test per acceptance criterion, at its stated tolerance and time budget.

The canonical verification runs twice in fresh interpreter processes; the
first report feeds criteria 2-6, 8 and 9 and the pair feeds criterion 10.
Each test prints a single PASS/FAIL line (also collected in the terminal
summary).
"""

import json
import re
import subprocess
import sys
import time

import numpy as np
import pytest

from abgauge.modes import completeness_residual, default_spacing, polarization_basis
from abgauge.scenario import canonical_scenario, run_scenario

# pinned tolerances and budgets (seconds)
COMPLETENESS_TOL, COMPLETENESS_BUDGET = 1e-12, 1.0
TRANSVERSE_TOL, TRANSVERSE_BUDGET = 1e-6, 30.0
CLOSED_TOL, CLOSED_BUDGET = 1e-6, 60.0
STOKES_FINITE_TOL, STOKES_IDEAL_TOL, STOKES_BUDGET = 1e-4, 1e-10, 60.0
BOUNDARY_TOL, MATERIAL_FACTOR, OPEN_BUDGET = 1e-6, 10.0, 120.0
EQUALITY_TOL, EQUALITY_BUDGET = 1e-12, 60.0
FAITHFUL_TOL, FAITHFUL_BUDGET = 2e-2, 300.0
AXIAL_TOL, IMAGINARY_TOL, AXIAL_BUDGET = 2e-2, 1e-10, 120.0
BOYER_TOL, CANCEL_TOL, BOYER_BUDGET = 1e-2, 1e-10, 120.0
VERIFY_BUDGET = 300.0

RESULTS = {}
LINE = re.compile(r"^\s+(PASS|FAIL)\s+(\S+)\s+\(([\d.]+) s\)$")


def record(number, title, ok, detail):
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def _verify(out_dir):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "abgauge", "verify", "--out", str(out_dir)],
                          capture_output=True, text=True)
    wall = time.perf_counter() - start
    timings = {}
    for line in proc.stdout.splitlines():
        m = LINE.match(line)
        if m:
            timings[m.group(2)] = float(m.group(3))
    raw = (out_dir / "canonical.json").read_bytes()
    return {"exit": proc.returncode, "wall": wall, "timings": timings, "raw": raw,
            "report": json.loads(raw), "stdout": proc.stdout + proc.stderr}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return [_verify(tmp_path_factory.mktemp(f"verify{i}")) for i in range(2)]


@pytest.fixture(scope="module")
def checks(runs):
    return {c["name"]: c for c in runs[0]["report"]["checks"]}


def test_criterion_01_polarization_completeness(checks):
    rng = np.random.default_rng(1)
    k = rng.normal(size=(1000, 3)) * rng.uniform(0.1, 10.0, size=(1000, 1))
    start = time.perf_counter()
    worst = float(completeness_residual(k).max())
    e1, e2 = polarization_basis(k)
    elapsed = time.perf_counter() - start
    grid_worst = checks["polarization-completeness"]["values"]["grid_max_completeness_residual"]
    ok = worst < COMPLETENESS_TOL and grid_worst < COMPLETENESS_TOL and elapsed < COMPLETENESS_BUDGET
    record(1, "polarization completeness", ok,
           f"random max {worst:.2e}, grid max {grid_worst:.2e} < {COMPLETENESS_TOL:g}; {elapsed:.3f} s")


def test_criterion_02_transversality(checks, runs):
    v = checks["transversality"]["values"]
    t = runs[0]["timings"]["transversality"]
    ok = v["probes"] == 100 and v["max_scaled_divergence"] < TRANSVERSE_TOL and t < TRANSVERSE_BUDGET
    record(2, "Coulomb transversality", ok,
           f"max |div A| L/|A| = {v['max_scaled_divergence']:.2e} at {v['probes']} probes; {t:.1f} s")


def test_criterion_03_closed_path_invariance(checks, runs):
    v = checks["closed-path-invariance"]["values"]["circle"]
    phases = list(v["phases"].values())
    worst = max(abs(a - b) for a in phases for b in phases) / max(abs(p) for p in phases)
    t = runs[0]["timings"]["closed-path-invariance"]
    sc = canonical_scenario()
    radius_ok = sc.paths["circle"].radius == pytest.approx(3 * sc.source.radius)
    ok = len(phases) == 3 and radius_ok and worst < CLOSED_TOL and t < CLOSED_BUDGET
    record(3, "closed-path gauge invariance", ok,
           f"max pairwise rel diff {worst:.2e} over {sorted(v['phases'])}; {t:.1f} s")


def test_criterion_04_stokes(checks, runs):
    c = checks["stokes"]
    finite = abs(c["values"]["circle"]["phase"] - c["reference"]["circle"]["minus_e_flux"]) / abs(
        c["reference"]["circle"]["minus_e_flux"])
    ideal = abs(c["values"]["ideal"]["phase"] - c["reference"]["ideal"]["minus_e_flux"]) / abs(
        c["reference"]["ideal"]["minus_e_flux"])
    t = runs[0]["timings"]["stokes"]
    ok = finite < STOKES_FINITE_TOL and ideal < STOKES_IDEAL_TOL and t < STOKES_BUDGET
    record(4, "Stokes consistency", ok, f"finite {finite:.2e}, ideal {ideal:.2e}; {t:.1f} s")


def test_criterion_05_open_path_boundary_law(checks, runs):
    v = checks["open-path-boundary-law"]["values"]["half-circle"]
    phi_c = v["phases"]["coulomb"]
    pair = next(p for p in v["pairs"] if p["gauges"] == ["coulomb", "axial"])
    residual = abs(pair["residual"]) / abs(phi_c)
    worst = max(abs(p["residual"]) for p in v["pairs"]) / abs(phi_c)
    g = checks["open-path-gauge-dependence"]["values"]["half-circle"]
    ratio = abs(g["axial_minus_coulomb"]) / g["combined_tolerance"]
    t = runs[0]["timings"]["open-path-boundary-law"] + runs[0]["timings"]["open-path-gauge-dependence"]
    ok = residual < BOUNDARY_TOL and worst < BOUNDARY_TOL and ratio > MATERIAL_FACTOR and t < OPEN_BUDGET
    record(5, "open-path boundary law", ok,
           f"residual {residual:.2e} (all pairs {worst:.2e}); |PhiX - PhiC| = "
           f"{abs(g['axial_minus_coulomb']):.3f} = {ratio:.1e} x tolerance; {t:.1f} s")


def test_criterion_06_perturbative_equals_coherent(checks, runs):
    v = checks["pt-coherent-equality"]["values"]
    rel = abs(v["delta_eps"] - v["delta_E"]) / abs(v["delta_E"])
    t = runs[0]["timings"]["polarization-completeness"] + runs[0]["timings"]["pt-coherent-equality"]
    grid = runs[0]["report"]["grid"]
    ok = grid["extent"] == 48 and rel < EQUALITY_TOL and v["max_imag_residual"] < EQUALITY_TOL \
        and t < EQUALITY_BUDGET
    record(6, "second-order = coherent energy", ok,
           f"rel diff {rel:.2e}, imaginary residue {v['max_imag_residual']:.1e}; "
           f"{t:.1f} s incl. grid build")


def test_criterion_07_grid_faithfulness():
    sc = canonical_scenario()
    sc.checks = ["grid-faithfulness"]
    start = time.perf_counter()
    rec = run_scenario(sc)["checks"][0]
    elapsed = time.perf_counter() - start
    v = rec["values"]
    coarse, fine = np.array(v["relative_errors"]), np.array(v["refined_relative_errors"])
    refined = v["refined_grid"]
    # both lattices fill the same cube |k_i| < N dk
    same_cube = refined["spacing"] * refined["extent"] == pytest.approx(
        default_spacing(sc.mode_source) * 48, rel=1e-15)
    ok = len(coarse) == 5 and coarse.max() < FAITHFUL_TOL and bool(np.all(fine < coarse)) \
        and same_cube and elapsed < FAITHFUL_BUDGET
    record(7, "mode-grid faithfulness", ok,
           f"max error {coarse.max():.2e} -> {fine.max():.2e} after halving the spacing; "
           f"per probe {np.round(coarse * 100, 3).tolist()} -> {np.round(fine * 100, 3).tolist()} %; "
           f"{elapsed:.1f} s")


def test_criterion_08_axial_identity(checks, runs):
    a = checks["axial-identity"]
    rel = abs(a["values"]["two_re_term1"] - a["reference"]["minus_e_v_dot_axial_A"]) / abs(
        a["reference"]["minus_e_v_dot_axial_A"])
    p = checks["purely-imaginary"]["values"]
    re_t2, im_t2 = p["term2"]
    ratio = abs(re_t2) / abs(im_t2)
    t = runs[0]["timings"]["axial-identity"] + runs[0]["timings"]["purely-imaginary"]
    ok = rel < AXIAL_TOL and ratio < IMAGINARY_TOL and t < AXIAL_BUDGET
    record(8, "axial second-order identity", ok,
           f"2 Re term1 vs -e v.A^X rel diff {rel:.2e}; |Re|/|Im| term2 = {ratio:.1e} "
           f"(per-mode realness {p['mode_realness']:.2f}); {t:.1f} s")


def test_criterion_09_boyer(checks, runs):
    s = checks["boyer-sign"]
    sign = abs(s["values"]["boyer"] - s["reference"]["minus_delta_eps"]) / abs(s["reference"]["minus_delta_eps"])
    c = checks["boyer-cancellation"]["values"]
    cancel = abs(c["residual"]) / abs(c["boyer"])
    t = runs[0]["timings"]["boyer-sign"] + runs[0]["timings"]["boyer-cancellation"]
    ok = sign < BOYER_TOL and cancel < CANCEL_TOL and t < BOYER_BUDGET
    record(9, "Boyer sign and cancellation", ok,
           f"boyer vs -delta_eps rel diff {sign:.2e}; cancellation residual {cancel:.1e}; {t:.1f} s")


def test_criterion_10_determinism(runs):
    same = runs[0]["raw"] == runs[1]["raw"]
    exits = [r["exit"] for r in runs]
    walls = [r["wall"] for r in runs]
    ok = same and exits == [0, 0] and max(walls) < VERIFY_BUDGET
    record(10, "end-to-end determinism", ok,
           f"byte-identical reports: {same}; exit codes {exits}; "
           f"verify wall time {walls[0]:.0f} s / {walls[1]:.0f} s")
