"""Scenario files, the named identity checks and the verification report.

A scenario is one JSON document. Lengths are in units of ``length_scale``
(default 1); all other quantities use Heaviside-Lorentz units with
``hbar = c = 1``. See ``scenarios/canonical.json`` for a complete example.
"""

from dataclasses import dataclass, field, replace
from importlib import resources
import hashlib
import json
import math
import time

import numpy as np

from . import __version__
from .boyer import hg_cancellation
from .gauges import (GaugeSpecError, Tolerances, axial_A, coulomb_A, make_potential,
                     validate_gauge)
from .modes import (ModeGrid, axial_polarization_residual, axial_second_order_terms,
                    completeness_residual, default_spacing, delta_E_coherent,
                    delta_eps_coulomb, polarization_basis, reconstruct_A,
                    term2_mode_realness)
from .paths import (PATH_RTOL, ParticleState, PathError, ab_phase, enclosed_flux,
                    gauge_dependence_report, path_from_dict)
from .sources import ClosedFormOnlyError, IdealSolenoid, source_from_dict

SCHEMA = "abgauge-scenario/1"
UNITS = "heaviside-lorentz"
DEFAULT_EXTENT = 48

# check tolerances; each is multiplied by --tolerance-scale
DEFAULT_TOLERANCES = {
    "polarization-completeness": 1e-12,
    "transversality": 1e-6,
    "closed-path-invariance": 1e-6,
    "stokes": 1e-4,
    "stokes-ideal": 1e-10,
    "open-path-boundary-law": 1e-6,
    "open-path-gauge-dependence": 10.0,
    "pt-coherent-equality": 1e-12,
    "axial-identity": 2e-2,
    "purely-imaginary": 1e-10,
    "boyer-sign": 1e-2,
    "boyer-cancellation": 1e-10,
    "grid-faithfulness": 2e-2,
    "energy-gauge-dependence": 10.0,
    "real-residual": 1e-12,
    "polarization-replacement": 1e-10,
}

# grid-limited comparisons: widened by (default extent / extent)^2 on coarser grids
CONVERGENCE_SENSITIVE = ("axial-identity", "boyer-sign", "grid-faithfulness")

_TOP_KEYS = {"schema", "name", "description", "units", "length_scale", "source", "source_level",
             "mode_source", "mode_level", "ideal", "particle", "gauges", "paths", "grid",
             "probes", "tolerances", "quadrature", "checks", "export", "seed"}


class ScenarioError(ValueError):
    """Schema violation, reported with the offending field (and line when known)."""

    def __init__(self, message, where=None, line=None):
        self.where = where
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if where:
            prefix += f"{where}: "
        super().__init__(prefix + message)


def _line_of(text, needle):
    if not text or not needle:
        return None
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def _require(cond, message, where, text=None, needle=None):
    if not cond:
        raise ScenarioError(message, where, _line_of(text, needle))


def _number(value, where, text=None, positive=False, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    _require(ok, f"expected a finite number, got {value!r}", where, text, json.dumps(value))
    if integer:
        _require(float(value).is_integer(), f"expected an integer, got {value!r}", where)
        value = int(value)
    if positive:
        _require(value > 0, f"must be positive, got {value!r}", where, text, json.dumps(value))
    return value


def _vector(value, where, text=None):
    _require(isinstance(value, list) and len(value) == 3,
             f"expected a list of three numbers, got {value!r}", where)
    return [_number(v, f"{where}[{i}]", text) for i, v in enumerate(value)]


# -- length scaling ----------------------------------------------------------

_LENGTH_FIELDS = {"radius", "half_length", "center"}


def _scale_lengths(spec, scale):
    if scale == 1.0:
        return spec
    out = dict(spec)
    for key in list(out):
        if key in _LENGTH_FIELDS:
            out[key] = ([c * scale for c in out[key]] if isinstance(out[key], list)
                        else out[key] * scale)
        elif key == "vertices":
            out[key] = [[c * scale for c in v] for v in out[key]]
        elif key == "turns_per_length":
            out[key] = out[key] / scale
    return out


@dataclass
class Scenario:
    name: str
    raw: dict
    text: str = ""
    source: object = None
    source_level: int = 0
    mode_source: object = None
    mode_level: int = 3
    ideal_source: object = None
    ideal_path: object = None
    particle: ParticleState = None
    gauges: list = field(default_factory=list)
    paths: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    quad: Tolerances = field(default_factory=Tolerances)
    path_rtol: float = PATH_RTOL
    flux_angles: int = 180
    checks: list = field(default_factory=list)
    export: dict = field(default_factory=dict)
    seed: int = 12345

    @property
    def digest(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _build_source(spec, where, text, scale):
    _require(isinstance(spec, dict), "expected an object", where)
    _require("kind" in spec, "missing field 'kind'", where)
    try:
        return source_from_dict(_scale_lengths(spec, scale))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(str(exc), where, _line_of(text, json.dumps(spec.get("kind")))) from None


def _build_path(spec, where, text, scale):
    _require(isinstance(spec, dict), "expected an object", where)
    try:
        return path_from_dict(_scale_lengths(spec, scale))
    except (PathError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), where) from None


def parse_scenario(data, text=""):
    """Validate a decoded scenario document and build its objects."""
    _require(isinstance(data, dict), "scenario must be a JSON object", "<root>")
    unknown = sorted(set(data) - _TOP_KEYS)
    _require(not unknown, f"unknown top-level field(s) {unknown}", "<root>", text,
             f'"{unknown[0]}"' if unknown else None)
    _require(data.get("schema", SCHEMA) == SCHEMA,
             f"unsupported schema {data.get('schema')!r}; expected {SCHEMA!r}", "schema", text,
             '"schema"')
    units = data.get("units", UNITS)
    _require(units == UNITS, f"unsupported unit system {units!r}; expected {UNITS!r}", "units",
             text, json.dumps(units))
    name = data.get("name", "scenario")
    _require(isinstance(name, str) and name, "expected a non-empty string", "name")
    scale = float(_number(data.get("length_scale", 1.0), "length_scale", text, positive=True))
    sc = Scenario(name=name, raw=data, text=text)

    if "source" in data:
        sc.source = _build_source(data["source"], "source", text, scale)
    sc.source_level = _number(data.get("source_level", 0), "source_level", text, integer=True)
    if "mode_source" in data:
        sc.mode_source = _build_source(data["mode_source"], "mode_source", text, scale)
    else:
        sc.mode_source = sc.source
    sc.mode_level = _number(data.get("mode_level", 3), "mode_level", text, integer=True)
    _require(sc.source_level >= 0 and sc.mode_level >= 0, "levels must be >= 0", "source_level")

    if "ideal" in data:
        ideal = data["ideal"]
        _require(isinstance(ideal, dict) and {"source", "path"} <= set(ideal),
                 "expected an object with 'source' and 'path'", "ideal")
        sc.ideal_source = _build_source(ideal["source"], "ideal.source", text, scale)
        _require(isinstance(sc.ideal_source, IdealSolenoid), "must be an ideal_solenoid",
                 "ideal.source")
        sc.ideal_path = _build_path(ideal["path"], "ideal.path", text, scale)

    if "particle" in data:
        p = data["particle"]
        _require(isinstance(p, dict), "expected an object", "particle")
        for key in ("e", "m", "p", "q"):
            _require(key in p, f"missing field {key!r}", "particle")
        e = _number(p["e"], "particle.e", text)
        m = _number(p["m"], "particle.m", text, positive=True)
        sc.particle = ParticleState(e, m, _vector(p["p"], "particle.p", text),
                                    [c * scale for c in _vector(p["q"], "particle.q", text)])

    gauges = data.get("gauges", [])
    _require(isinstance(gauges, list), "expected a list of gauge strings", "gauges")
    for i, gname in enumerate(gauges):
        try:
            validate_gauge(gname)
        except GaugeSpecError as exc:
            raise ScenarioError(str(exc), f"gauges[{i}]",
                                _line_of(text, json.dumps(gname))) from None
    sc.gauges = [g.strip() for g in gauges]

    paths = data.get("paths", [])
    _require(isinstance(paths, list), "expected a list of path objects", "paths")
    for i, spec in enumerate(paths):
        where = f"paths[{i}]"
        _require(isinstance(spec, dict), "expected an object", where)
        pname = spec.get("name", f"path{i}")
        _require(pname not in sc.paths, f"duplicate path name {pname!r}", where, text, json.dumps(pname))
        sc.paths[pname] = _build_path({k: v for k, v in spec.items() if k != "name"},
                                      where, text, scale)

    grid = dict(data.get("grid", {}))
    _require(set(grid) <= {"spacing", "extent"}, "grid accepts 'spacing' and 'extent'", "grid")
    if "spacing" in grid:
        grid["spacing"] = _number(grid["spacing"], "grid.spacing", text, positive=True) / scale
    grid["extent"] = _number(grid.get("extent", DEFAULT_EXTENT), "grid.extent", text,
                             positive=True, integer=True)
    _require(grid["extent"] >= 2, "must be >= 2", "grid.extent")
    sc.grid = grid

    probes = dict(data.get("probes", {}))
    if "reconstruction" in probes:
        pts = probes["reconstruction"]
        _require(isinstance(pts, list) and pts, "expected a list of points", "probes.reconstruction")
        probes["reconstruction"] = [[c * scale for c in _vector(p, f"probes.reconstruction[{i}]", text)]
                                    for i, p in enumerate(pts)]
    sc.probes = probes

    tol = data.get("tolerances", {})
    _require(isinstance(tol, dict), "expected an object", "tolerances")
    for key, value in tol.items():
        _require(key in DEFAULT_TOLERANCES, f"unknown tolerance {key!r}", f"tolerances.{key}",
                 text, json.dumps(key))
        _number(value, f"tolerances.{key}", text, positive=True)
    sc.tolerances = {**DEFAULT_TOLERANCES, **tol}

    quad = dict(data.get("quadrature", {}))
    known = {"quad_rtol", "derivative_step", "tail_cutoff", "tail_bound", "path_rtol", "flux_angles"}
    for key, value in quad.items():
        _require(key in known, f"unknown quadrature setting {key!r}", f"quadrature.{key}", text,
                 json.dumps(key))
        _number(value, f"quadrature.{key}", text, positive=True)
    path_rtol = quad.pop("path_rtol", PATH_RTOL)
    flux_angles = quad.pop("flux_angles", 180)
    sc.path_rtol = _number(path_rtol, "quadrature.path_rtol", text, positive=True)
    sc.flux_angles = _number(flux_angles, "quadrature.flux_angles", text, positive=True, integer=True)
    sc.quad = Tolerances(**quad)

    checks = data.get("checks", [])
    _require(isinstance(checks, list), "expected a list of check names", "checks")
    for i, cname in enumerate(checks):
        _require(cname in CHECKS, f"unknown check {cname!r}; known: {sorted(CHECKS)}",
                 f"checks[{i}]", text, json.dumps(cname))
    _require(len(set(checks)) == len(checks), "a check is listed twice", "checks")
    sc.checks = list(checks)
    for cname in sc.checks:
        for need in CHECKS[cname].needs:
            _require(getattr(sc, need) not in (None, {}, []),
                     f"check {cname!r} needs the {need!r} section", "checks", text,
                     json.dumps(cname))

    sc.export = dict(data.get("export", {}))
    sc.seed = _number(data.get("seed", 12345), "seed", text, integer=True)
    return sc


def load_scenario(path):
    with open(path) as fh:
        text = fh.read()
    return loads_scenario(text)


def loads_scenario(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})", None, exc.lineno) from None
    return parse_scenario(data, text)


def canonical_text():
    return resources.files("abgauge").joinpath("scenarios/canonical.json").read_text()


def canonical_scenario():
    return loads_scenario(canonical_text())


def with_strength(sc, g):
    """Copy of ``sc`` with every source's ``g`` replaced."""
    out = replace(sc)
    for attr in ("source", "mode_source", "ideal_source"):
        src = getattr(sc, attr)
        if src is not None:
            setattr(out, attr, src.with_strength(g))
    return out


# -- check machinery -----------------------------------------------------------

@dataclass
class Check:
    name: str
    fn: object
    needs: tuple
    inputs: tuple


CHECKS = {}


def check(name, needs=(), inputs=()):
    def register(fn):
        CHECKS[name] = Check(name, fn, needs, inputs or needs)
        return fn
    return register


def _rel(value, reference):
    diff = abs(value - reference)
    if diff == 0.0:
        return 0.0
    return diff / abs(reference) if reference != 0 else math.inf


class Context:
    """Shared, lazily computed state for one run."""

    def __init__(self, sc, tolerance_scale=1.0, extent=None):
        self.sc = sc
        self.extent = int(extent or sc.grid["extent"])
        self.tolerance_scale = float(tolerance_scale)
        self._grid = None
        self._phases = {}
        self._memo = {}

    def tol(self, key):
        base = self.sc.tolerances[key] * self.tolerance_scale
        if key in CONVERGENCE_SENSITIVE:
            base *= max(1.0, (DEFAULT_EXTENT / self.extent) ** 2)
        return base

    @property
    def spacing(self):
        return self.sc.grid.get("spacing") or default_spacing(self.sc.mode_source)

    @property
    def grid(self):
        if self._grid is None:
            self._grid = ModeGrid(self.spacing, self.extent, self.sc.mode_source, self.sc.mode_level)
        return self._grid

    def memo(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def phase_cache(self, pname):
        return self._phases.setdefault(pname, {})

    def path_report(self, pname, gauges=None):
        sc = self.sc
        gauges = list(gauges or sc.gauges)
        return gauge_dependence_report(
            sc.paths[pname], sc.source, gauges, sc.particle.e if sc.particle else 1.0,
            level=sc.source_level, tolerances=sc.quad, rtol=sc.path_rtol,
            cache=self.phase_cache(pname))

    def closed_paths(self):
        return [n for n, p in self.sc.paths.items() if p.closed]

    def open_paths(self):
        return [n for n, p in self.sc.paths.items() if not p.closed]

    def charge(self):
        return self.sc.particle.e if self.sc.particle else 1.0


def _result(passed, values, reference=None, tolerance=None, notes=None):
    return {"values": values, "reference": reference or {}, "tolerance": tolerance,
            "passed": bool(passed), "notes": notes or ""}


@check("polarization-completeness")
def _polarization(ctx):
    rng = np.random.default_rng(ctx.sc.seed)
    k = rng.normal(size=(1000, 3)) * rng.uniform(0.1, 10.0, size=(1000, 1))
    worst_random = float(completeness_residual(k).max())
    e1, e2 = polarization_basis(k)
    khat = k / np.linalg.norm(k, axis=1)[:, None]
    hand = float(np.abs(np.linalg.det(np.stack([e1, e2, khat], axis=1)) - 1.0).max())
    ortho = float(max(np.abs(np.einsum("ij,ij->i", e1, khat)).max(),
                      np.abs(np.einsum("ij,ij->i", e2, khat)).max()))
    values = {"random_modes": 1000, "max_completeness_residual": worst_random,
              "max_handedness_residual": hand, "max_transversality": ortho}
    worst = max(worst_random, hand, ortho)
    if ctx.sc.mode_source is not None:
        grid_worst = max(float(completeness_residual(c.k).max()) for c in ctx.grid.chunks())
        values["grid_modes"] = ctx.grid.size
        values["grid_max_completeness_residual"] = grid_worst
        worst = max(worst, grid_worst)
    tol = ctx.tol("polarization-completeness")
    return _result(worst < tol, values, {"identity": "sum_l e_i e_j = delta_ij - k_i k_j / k^2"}, tol)


def _transversality_probes(source, count, rmin, rmax):
    i = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azim = np.pi * (1.0 + 5.0 ** 0.5) * i
    radius = rmin + (rmax - rmin) * ((i * 0.618033988749895) % 1.0)
    dirs = np.column_stack([np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim),
                            np.cos(polar)])
    center = np.asarray(getattr(source, "center", (0.0, 0.0, 0.0)))
    return center + source.radius * radius[:, None] * dirs


@check("transversality", needs=("mode_source",))
def _transversality(ctx):
    sc = ctx.sc
    spec = sc.probes.get("transversality", {})
    count = int(spec.get("count", 100))
    pts = _transversality_probes(sc.mode_source, count, spec.get("min_radius", 1.5),
                                 spec.get("max_radius", 3.0))
    pot = make_potential(sc.mode_source, "coulomb", sc.mode_level, sc.quad)
    div = np.asarray(pot.divergence(pts))
    amag = np.linalg.norm(pot(pts), axis=1)
    length = sc.mode_source.radius
    ok = amag > 0
    ratio = np.where(ok, np.abs(div) * length / np.where(ok, amag, 1.0), np.abs(div) * length)
    worst = float(ratio.max())
    tol = ctx.tol("transversality")
    return _result(worst < tol, {"probes": count, "max_scaled_divergence": worst,
                                 "median_scaled_divergence": float(np.median(ratio))},
                   {"divergence": 0.0}, tol, "|div A| L / |A| with Richardson-extrapolated central differences")


@check("closed-path-invariance", needs=("source", "paths", "gauges"))
def _closed_invariance(ctx):
    tol = ctx.tol("closed-path-invariance")
    values, passed = {}, True
    for pname in ctx.closed_paths():
        rep = ctx.path_report(pname)
        values[pname] = {"phases": rep["phases"], "max_rel_difference": rep["max_rel_residual"]}
        passed &= rep["max_rel_residual"] < tol
    if not values:
        return _result(False, {}, None, tol, "scenario has no closed path")
    return _result(passed, values, {"difference": 0.0}, tol)


@check("stokes", needs=("source", "paths"))
def _stokes(ctx):
    sc = ctx.sc
    e = ctx.charge()
    tol = ctx.tol("stokes")
    values, ref, passed = {}, {}, True
    for pname in ctx.closed_paths():
        cache = ctx.phase_cache(pname)
        if "coulomb" not in cache:
            pot = make_potential(sc.source, "coulomb", sc.source_level, sc.quad)
            cache["coulomb"] = ab_phase(sc.paths[pname], pot, e, sc.path_rtol)
        phase = cache["coulomb"].value
        flux, ferr = enclosed_flux(sc.paths[pname], sc.source, n_angle=sc.flux_angles,
                                   level=sc.source_level)
        rel = _rel(phase, -e * flux)
        values[pname] = {"phase": phase, "relative_difference": rel, "flux_error": ferr}
        ref[pname] = {"minus_e_flux": -e * flux}
        passed &= rel < tol
    if not values:
        return _result(False, {}, None, tol, "scenario has no closed path")
    tolerance = {"finite": tol}
    if sc.ideal_source is not None:
        itol = ctx.tol("stokes-ideal")
        pot = make_potential(sc.ideal_source, "coulomb")
        phase = ab_phase(sc.ideal_path, pot, e, rtol=1e-13).value
        flux, _ = enclosed_flux(sc.ideal_path, sc.ideal_source)
        rel = _rel(phase, -e * flux)
        values["ideal"] = {"phase": phase, "relative_difference": rel}
        ref["ideal"] = {"minus_e_flux": -e * flux}
        tolerance["ideal"] = itol
        passed &= rel < itol
    return _result(passed, values, ref, tolerance)


def _open_pair(rep, a="coulomb", b="axial"):
    for pair in rep["pairs"]:
        if pair["gauges"] == [a, b]:
            return pair
    raise KeyError((a, b))


@check("open-path-boundary-law", needs=("source", "paths", "gauges"))
def _boundary_law(ctx):
    tol = ctx.tol("open-path-boundary-law")
    values, passed = {}, True
    for pname in ctx.open_paths():
        rep = ctx.path_report(pname)
        scale = abs(rep["phases"]["coulomb"]) if "coulomb" in rep["phases"] else max(
            abs(v) for v in rep["phases"].values())
        worst = max(abs(p["residual"]) for p in rep["pairs"])
        rel = worst / scale if scale > 0 else (0.0 if worst == 0 else math.inf)
        values[pname] = {"phases": rep["phases"], "pairs": rep["pairs"], "max_rel_residual": rel}
        passed &= rel < tol
    if not values:
        return _result(False, {}, None, tol, "scenario has no open path")
    return _result(passed, values, {"residual": 0.0}, tol,
                   "residual = (Phi_i - Phi_j) - boundary term, relative to |Phi_coulomb|")


@check("open-path-gauge-dependence", needs=("source", "paths", "gauges"))
def _gauge_dependence(ctx):
    factor = ctx.tol("open-path-gauge-dependence")
    law = ctx.tol("open-path-boundary-law")
    values, passed = {}, True
    if not {"coulomb", "axial"} <= set(ctx.sc.gauges):
        return _result(False, {}, None, factor, "needs both the coulomb and axial gauges")
    for pname in ctx.open_paths():
        rep = ctx.path_report(pname)
        pair = _open_pair(rep)
        combined = law * abs(rep["phases"]["coulomb"]) + rep["errors"]["coulomb"] + rep["errors"]["axial"]
        margin = abs(pair["difference"]) / combined if combined > 0 else 0.0
        values[pname] = {"axial_minus_coulomb": -pair["difference"], "combined_tolerance": combined,
                         "ratio": margin}
        passed &= margin > factor
    if not values:
        return _result(False, {}, None, factor, "scenario has no open path")
    return _result(passed, values, None, {"min_ratio": factor},
                   "the open-path phase differs between gauges by more than the stated factor")


def _coulomb_energies(ctx):
    grid, particle = ctx.grid, ctx.sc.particle
    return ctx.memo("coulomb", lambda: (delta_eps_coulomb(grid, particle),
                                        delta_E_coherent(grid, particle, "coulomb")))


def _axial_energy(ctx):
    return ctx.memo("axial", lambda: delta_E_coherent(ctx.grid, ctx.sc.particle, "axial"))


def _axial_terms(ctx):
    return ctx.memo("terms", lambda: axial_second_order_terms(ctx.grid, ctx.sc.particle))


@check("pt-coherent-equality", needs=("mode_source", "particle"))
def _pt_coherent(ctx):
    eps, coh = _coulomb_energies(ctx)
    tol = ctx.tol("pt-coherent-equality")
    rtol = ctx.tol("real-residual")
    rel = _rel(eps.value, coh.value)
    imag = max(eps.imag_residual, coh.imag_residual)
    return _result(rel < tol and imag < rtol,
                   {"delta_eps": eps.value, "delta_E": coh.value, "relative_difference": rel,
                    "max_imag_residual": imag},
                   None, {"equality": tol, "imag": rtol})


@check("axial-identity", needs=("mode_source", "particle"))
def _axial_identity(ctx):
    sc = ctx.sc
    t1, t2 = _axial_terms(ctx)
    axial = _axial_energy(ctx)
    v = sc.particle.velocity
    ax_real = axial_A(sc.mode_source, sc.particle.q, sc.mode_level, sc.quad)
    ref = -sc.particle.e * float(v @ ax_real)
    tol = ctx.tol("axial-identity")
    exact = ctx.tol("real-residual")
    repl = axial_polarization_residual(ctx.grid)
    rel_real = _rel(2 * t1.real, ref)
    total = 2 * t1.real + 2 * t2.real
    rel_coh = _rel(total, axial.value)
    he2 = abs(axial.details["he2_expectation"])
    he2_rel = he2 / abs(axial.value) if axial.value else he2
    passed = (rel_real < tol and rel_coh < tol and he2_rel < exact
              and repl < ctx.tol("polarization-replacement"))
    return _result(passed,
                   {"two_re_term1": 2 * t1.real, "term1": [t1.real, t1.imag],
                    "coherent_axial": axial.value, "relative_to_real_space": rel_real,
                    "relative_to_coherent": rel_coh, "he2_expectation": axial.details["he2_expectation"],
                    "polarization_replacement_residual": repl},
                   {"minus_e_v_dot_axial_A": ref}, {"identity": tol, "he2": exact,
                                                   "replacement": ctx.tol("polarization-replacement")})


@check("purely-imaginary", needs=("mode_source", "particle"))
def _purely_imaginary(ctx):
    t1, t2 = _axial_terms(ctx)
    tol = ctx.tol("purely-imaginary")
    realness = term2_mode_realness(ctx.grid, ctx.sc.particle)
    values = {"term2": [t2.real, t2.imag], "mode_realness": realness}
    if t2 == 0:
        return _result(True, {**values, "ratio": 0.0}, None, tol,
                       "degenerate: the source has no current along the third axis")
    ratio = abs(t2.real) / abs(t2.imag) if t2.imag else math.inf
    values["ratio"] = ratio
    return _result(ratio < tol, values, None, tol,
                   "checked on the symmetric sum; mode_realness is the per-mode |Re| share")


@check("boyer-sign", needs=("mode_source", "particle"))
def _boyer_sign(ctx):
    sc = ctx.sc
    eps, _ = _coulomb_energies(ctx)
    boyer, hg, resid = ctx.memo("boyer", lambda: hg_cancellation(sc.particle, sc.mode_source, ctx.grid))
    a_real = coulomb_A(sc.mode_source, sc.particle.q, sc.mode_level)
    ref_real = sc.particle.e * float(sc.particle.velocity @ a_real)
    tol = ctx.tol("boyer-sign")
    rel_eps = _rel(boyer, -eps.value)
    rel_real = _rel(boyer, ref_real)
    return _result(rel_eps < tol and rel_real < tol,
                   {"boyer": boyer, "relative_to_minus_delta_eps": rel_eps,
                    "relative_to_real_space": rel_real},
                   {"minus_delta_eps": -eps.value, "e_v_dot_A": ref_real}, tol)


@check("boyer-cancellation", needs=("mode_source", "particle"))
def _boyer_cancel(ctx):
    sc = ctx.sc
    boyer, hg, resid = ctx.memo("boyer", lambda: hg_cancellation(sc.particle, sc.mode_source, ctx.grid))
    tol = ctx.tol("boyer-cancellation")
    rel = abs(resid) / abs(boyer) if boyer else abs(resid)
    return _result(rel < tol, {"boyer": boyer, "hg_term": hg, "residual": resid,
                               "relative_residual": rel}, {"residual": 0.0}, tol)


@check("grid-faithfulness", needs=("mode_source",))
def _faithfulness(ctx):
    sc = ctx.sc
    pts = np.asarray(sc.probes.get("reconstruction") or _default_reconstruction_probes(sc.mode_source))
    ref = coulomb_A(sc.mode_source, pts, sc.mode_level)
    norm = np.linalg.norm(ref, axis=1)
    tol = ctx.tol("grid-faithfulness")

    def errors(grid):
        rec = reconstruct_A(grid, pts)
        return np.linalg.norm(rec - ref, axis=1) / np.where(norm > 0, norm, 1.0)

    coarse = errors(ctx.grid)
    fine_grid = ModeGrid(ctx.spacing / 2, 2 * ctx.extent, sc.mode_source, sc.mode_level,
                         cache_limit=0)
    fine = errors(fine_grid)
    worst, worst_fine = float(coarse.max()), float(fine.max())
    passed = worst < tol and bool(np.all(fine < coarse))
    return _result(passed, {"probes": pts.tolist(), "relative_errors": coarse.tolist(),
                            "refined_relative_errors": fine.tolist(), "max_error": worst,
                            "refined_max_error": worst_fine,
                            "refined_grid": fine_grid.describe()},
                   None, tol, "refinement halves the spacing at fixed k_max; every probe error must drop")


def _default_reconstruction_probes(source):
    dirs = np.array([[1, 1, 1], [-1, 2, 2], [2, -1, 2], [0, 3, 4], [-2, 2, 1]], float)
    center = np.asarray(getattr(source, "center", (0.0, 0.0, 0.0)))
    return center + 2 * source.radius * dirs / np.linalg.norm(dirs, axis=1)[:, None]


@check("energy-gauge-dependence", needs=("mode_source", "particle"))
def _energy_gauge(ctx):
    _, coh = _coulomb_energies(ctx)
    axial = _axial_energy(ctx)
    factor = ctx.tol("energy-gauge-dependence")
    combined = ctx.tol("axial-identity") * (abs(axial.value) + abs(coh.value))
    diff = axial.value - coh.value
    ratio = abs(diff) / combined if combined > 0 else 0.0
    return _result(ratio > factor, {"coulomb": coh.value, "axial": axial.value,
                                    "difference": diff, "combined_tolerance": combined,
                                    "ratio": ratio}, None, {"min_ratio": factor})


VERIFY_CHECKS = ("polarization-completeness", "transversality", "closed-path-invariance", "stokes",
                 "open-path-boundary-law", "open-path-gauge-dependence", "pt-coherent-equality",
                 "axial-identity", "purely-imaginary", "boyer-sign", "boyer-cancellation")


# -- running and reporting -----------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _section_digest(sc, keys, extra):
    blob = {k: sc.raw.get(k) for k in sorted(set(keys) | {"tolerances", "quadrature"})}
    blob["_settings"] = extra
    text = json.dumps(blob, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


_RAW_KEYS = {"source": ("source", "source_level"), "mode_source": ("mode_source", "mode_level", "grid"),
             "paths": ("paths",), "gauges": ("gauges",), "particle": ("particle",)}


def run_scenario(sc, tolerance_scale=1.0, grid_n=None, strength=None, log=None):
    """Run every requested check in order; returns the report dictionary."""
    if not (tolerance_scale > 0 and math.isfinite(tolerance_scale)):
        raise ScenarioError("tolerance scale must be positive", "--tolerance-scale")
    if grid_n is not None and int(grid_n) < 2:
        raise ScenarioError("grid extent must be >= 2", "--grid-n")
    if strength is not None:
        sc = with_strength(sc, float(strength))
    ctx = Context(sc, tolerance_scale, grid_n)
    settings = {"tolerance_scale": float(tolerance_scale), "grid_n": ctx.extent,
                "strength_override": None if strength is None else float(strength)}
    records = []
    for name in sc.checks:
        spec = CHECKS[name]
        start = time.perf_counter()
        try:
            res = spec.fn(ctx)
        except (GaugeSpecError, PathError, ClosedFormOnlyError, ValueError, RuntimeError) as exc:
            res = _result(False, {}, None, None, f"error: {type(exc).__name__}: {exc}")
        elapsed = time.perf_counter() - start
        keys = [k for need in spec.inputs for k in _RAW_KEYS.get(need, (need,))]
        record = {"name": name, "inputs_digest": _section_digest(sc, keys, settings), **res}
        records.append(_jsonable(record))
        if log is not None:
            log(name, record["passed"], elapsed)
    n_pass = sum(r["passed"] for r in records)
    grid_meta = ctx.grid.describe() if sc.mode_source is not None else None
    report = {
        "tool": "abgauge",
        "version": __version__,
        "scenario": sc.name,
        "scenario_digest": sc.digest,
        "settings": settings,
        "grid": _jsonable(grid_meta),
        "quadrature": {"quad_rtol": sc.quad.quad_rtol, "derivative_step": sc.quad.derivative_step,
                       "tail_cutoff": sc.quad.tail_cutoff, "tail_bound": sc.quad.tail_bound,
                       "path_rtol": sc.path_rtol, "flux_angles": sc.flux_angles,
                       "source_level": sc.source_level},
        "checks": records,
        "summary": {"total": len(records), "passed": n_pass, "failed": len(records) - n_pass,
                    "ok": n_pass == len(records)},
    }
    if "boyer" in ctx._memo:
        boyer, hg, resid = ctx._memo["boyer"]
        report["appendix"] = {"boyer_energy": boyer, "hg_term": hg, "residual": resid}
    return report


def report_json(report):
    return json.dumps(report, indent=2) + "\n"


def _headline(rec):
    v = rec["values"]
    for key in ("relative_difference", "max_rel_residual", "relative_to_real_space", "ratio",
                "relative_residual", "max_error", "max_scaled_divergence",
                "max_completeness_residual"):
        if key in v:
            return key, v[key]
    for sub in v.values():
        if isinstance(sub, dict):
            for key in ("max_rel_difference", "relative_difference", "max_rel_residual", "ratio"):
                if key in sub:
                    return key, sub[key]
    return "", None


def report_text(report):
    lines = [f"abgauge {report['version']}  scenario: {report['scenario']}",
             f"scenario digest: {report['scenario_digest'][:16]}", ""]
    rows = []
    for rec in report["checks"]:
        key, val = _headline(rec)
        tol = rec["tolerance"]
        if isinstance(tol, dict):
            tol = ", ".join(f"{k}={v:.3g}" for k, v in tol.items())
        elif tol is not None:
            tol = f"{tol:.3g}"
        rows.append((rec["name"], "PASS" if rec["passed"] else "FAIL", key,
                     "" if val is None else (f"{val:.3e}" if isinstance(val, float) else str(val)),
                     tol or "", rec["notes"]))
    widths = [max(len(r[i]) for r in rows + [("check", "status", "measure", "value", "tolerance", "")])
              for i in range(5)]
    head = ("check", "status", "measure", "value", "tolerance")
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        line = "  ".join(c.ljust(w) for c, w in zip(r[:5], widths))
        if r[5] and r[5].startswith("error"):
            line += "  " + r[5]
        lines.append(line.rstrip())
    s = report["summary"]
    lines += ["", f"{s['passed']}/{s['total']} checks passed" + ("" if s["ok"] else "  (FAILED)")]
    return "\n".join(lines) + "\n"


# -- field export ----------------------------------------------------------------

FIELD_HEADER = ["x", "y", "z", "gauge", "Ax", "Ay", "Az", "Bx", "By", "Bz"]


def probe_box(box, shape):
    """Points of a regular ``shape`` lattice spanning ``box``, x slowest."""
    axes = []
    for name, n in zip("xyz", shape):
        lo, hi = box[name]
        axes.append(np.array([lo]) if n == 1 else np.linspace(lo, hi, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def export_fields(sc, out_path, box=None, shape=None, gauges=None):
    """Write ``A`` and ``B = curl A`` on a probe lattice, one row per (point, gauge).

    ``B`` is the finite-difference curl of each gauge's own potential, so
    rows for different gauges at one point agree in ``B`` up to the
    differencing error. Returns the number of data rows.
    """
    import csv

    if sc.source is None:
        raise ScenarioError("field export needs a 'source'", "source")
    spec = sc.export
    box = box or spec.get("box")
    shape = shape or spec.get("shape", [10, 10, 1])
    gauges = gauges or spec.get("gauges") or sc.gauges or ["coulomb"]
    _require(isinstance(box, dict) and set(box) == set("xyz"),
             "expected {'x': [lo, hi], 'y': [...], 'z': [...]}", "export.box")
    _require(len(shape) == 3 and all(int(n) >= 1 for n in shape), "expected three counts >= 1",
             "export.shape")
    for i, gname in enumerate(gauges):
        try:
            validate_gauge(gname)
        except GaugeSpecError as exc:
            raise ScenarioError(str(exc), f"export.gauges[{i}]") from None
    scale = float(sc.raw.get("length_scale", 1.0))
    pts = probe_box({k: [c * scale for c in v] for k, v in box.items()}, [int(n) for n in shape])
    fields = []
    for gname in gauges:
        pot = make_potential(sc.source, gname, sc.source_level, sc.quad)
        fields.append((pot.tag, np.asarray(pot(pts)), np.asarray(pot.curl(pts))))
    rows = 0
    with open(out_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(FIELD_HEADER)
        for i, x in enumerate(pts):
            for tag, a, b in fields:
                out.writerow([repr(float(c)) for c in x] + [tag]
                             + [repr(float(c)) for c in a[i]] + [repr(float(c)) for c in b[i]])
                rows += 1
    return rows
