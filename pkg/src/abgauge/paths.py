"""Particle paths, Aharonov-Bohm line integrals and enclosed flux."""

from dataclasses import dataclass
from itertools import combinations
import math

import numpy as np

from .gauges import b_field, make_potential
from .quadrature import adaptive
from .sources import DEFAULT_LEVEL, IdealSolenoid, discretize, orthonormal_frame


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class CircleArc:
    """Arc ``center + r (cos t u + sin t v)`` for t from ``start`` to ``stop``.

    ``(u, v, normal)`` is right-handed, so increasing ``t`` circulates
    counter-clockwise about ``normal``. ``stop < start`` reverses the arc.
    """

    center: tuple
    normal: tuple
    radius: float
    start: float = 0.0
    stop: float = 2.0 * math.pi
    order: int = 8

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or np.linalg.norm(n) == 0:
            raise PathError("arc normal must be a nonzero 3-vector")
        object.__setattr__(self, "normal", tuple(n / np.linalg.norm(n)))
        if not self.radius >= 0:
            raise PathError("arc radius must be non-negative")
        if abs(self.stop - self.start) > 2 * math.pi * (1 + 1e-12):
            raise PathError("arc spans more than one turn")

    @property
    def closed(self):
        return abs(abs(self.stop - self.start) - 2 * math.pi) <= 1e-12 * 2 * math.pi

    @property
    def length(self):
        return self.radius * abs(self.stop - self.start)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def _frame(self):
        return orthonormal_frame(self.normal)

    def position(self, t):
        u, v, _ = self._frame()
        t = np.asarray(t, dtype=float)[:, None]
        return np.asarray(self.center) + self.radius * (np.cos(t) * u + np.sin(t) * v)

    def velocity(self, t):
        u, v, _ = self._frame()
        t = np.asarray(t, dtype=float)[:, None]
        return self.radius * (-np.sin(t) * u + np.cos(t) * v)

    def breakpoints(self):
        n = max(2, int(math.ceil(abs(self.stop - self.start) / (math.pi / 4))))
        return np.linspace(self.start, self.stop, n + 1)

    @property
    def endpoints(self):
        return self.position([self.start, self.stop])

    def reversed(self):
        return CircleArc(self.center, self.normal, self.radius, self.stop, self.start, self.order)

    def split(self, fraction=0.5):
        mid = self.start + fraction * (self.stop - self.start)
        return (CircleArc(self.center, self.normal, self.radius, self.start, mid, self.order),
                CircleArc(self.center, self.normal, self.radius, mid, self.stop, self.order))


@dataclass(frozen=True)
class Polyline:
    """Straight legs through ``vertices``; closed when the ends coincide."""

    vertices: tuple
    order: int = 8

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 1:
            raise PathError("polyline needs an (n, 3) vertex list")
        object.__setattr__(self, "vertices", tuple(tuple(p) for p in v))

    @property
    def _v(self):
        return np.asarray(self.vertices)

    @property
    def diameter(self):
        v = self._v
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=2)))

    @property
    def closed(self):
        v = self._v
        return len(v) > 2 and np.linalg.norm(v[0] - v[-1]) <= 1e-12 * max(self.diameter, 1e-300)

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self._v, axis=0), axis=1).sum())

    def position(self, t):
        v = self._v
        t = np.asarray(t, dtype=float)
        i = np.clip(np.floor(t).astype(int), 0, max(len(v) - 2, 0))
        frac = (t - i)[:, None]
        return v[i] + frac * (v[np.minimum(i + 1, len(v) - 1)] - v[i])

    def velocity(self, t):
        v = self._v
        t = np.asarray(t, dtype=float)
        i = np.clip(np.floor(t).astype(int), 0, max(len(v) - 2, 0))
        # nodes sit strictly inside legs, so floor picks the right leg
        return v[np.minimum(i + 1, len(v) - 1)] - v[i]

    def breakpoints(self):
        return np.arange(len(self.vertices), dtype=float)

    @property
    def endpoints(self):
        v = self._v
        return np.array([v[0], v[-1]])

    def reversed(self):
        return Polyline(self.vertices[::-1], self.order)


@dataclass(frozen=True)
class ParticleState:
    e: float
    m: float
    p: tuple
    q: tuple

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("particle mass must be positive")
        object.__setattr__(self, "p", tuple(float(c) for c in self.p))
        object.__setattr__(self, "q", tuple(float(c) for c in self.q))

    @property
    def velocity(self):
        return np.asarray(self.p) / self.m


@dataclass(frozen=True)
class PhaseResult:
    value: float
    gauge: str
    error: float

    def __post_init__(self):
        if not self.error >= 0:
            raise ValueError("error estimate must be non-negative")


PATH_RTOL = 1e-9


def line_integral(path, field_fn, rtol=PATH_RTOL):
    """``int_path F . dq`` by adaptive Gauss-Legendre; returns (value, error)."""
    if path.length == 0.0:
        return 0.0, 0.0

    def integrand(t):
        return np.einsum("ij,ij->i", field_fn(path.position(t)), path.velocity(t))

    bp = path.breakpoints()
    if len(bp) < 2:
        return 0.0, 0.0
    value, err = adaptive(integrand, bp, rtol=rtol, order=path.order)
    return float(value), float(err)


def ab_phase(path, potential, e=1.0, rtol=PATH_RTOL):
    """``-e int_path A . dq`` for a potential already scaled by ``g``."""
    value, err = line_integral(path, potential, rtol)
    return PhaseResult(-e * value, getattr(potential, "tag", "custom"), abs(e) * err)


# -- flux through a spanning disc / polygon ----------------------------------

def _plane_breakpoints(source, center, normal, radius, level):
    """In-plane radii of wire vertices lying close to the disc plane."""
    segs = discretize(source, level)
    verts = np.concatenate([segs.start, segs.end])
    rel = verts - np.asarray(center)
    height = rel @ normal
    near = np.abs(height) <= 3 * max(float(np.max(segs.lengths)), 1e-3 * radius) + 0.05 * radius
    rho = np.linalg.norm(rel[near] - np.outer(height[near], normal), axis=1)
    rho = rho[(rho > 0) & (rho < radius)]
    if rho.size == 0:
        return np.array([0.0, radius])
    rho = np.unique(np.round(rho / radius, 6)) * radius
    return np.unique(np.concatenate([[0.0, radius], rho]))


def _disc_flux(source, arc, rtol, n_angle, level, atol=0.0):
    u, v, n = orthonormal_frame(arc.normal)
    c = np.asarray(arc.center)
    phi = 2 * math.pi * np.arange(n_angle) / n_angle
    ring = np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v

    def integrand(rho):
        pts = (c + rho[:, None, None] * ring[None]).reshape(-1, 3)
        bn = b_field(source, pts, level) @ n
        return rho * bn.reshape(len(rho), n_angle).mean(axis=1) * 2 * math.pi

    bp = _plane_breakpoints(source, c, n, arc.radius, level)
    return adaptive(integrand, bp, rtol=rtol, atol=atol)


def _ideal_flux(sol, arc):
    """Closed-form flux of an ideal solenoid through a circular disc."""
    w = np.asarray(sol.axis)
    n = np.asarray(arc.normal)
    rel = np.asarray(arc.center) - np.asarray(sol.center)
    perp = rel - (rel @ w) * w
    d = float(np.linalg.norm(perp))
    R, r = sol.radius, arc.radius
    sign = math.copysign(1.0, float(n @ w)) if abs(n @ w) > 1e-15 else 0.0
    if d + R <= r:
        return sign * sol.total_flux
    if d >= r + R:
        return 0.0
    if abs(abs(n @ w) - 1.0) > 1e-12:
        raise PathError("flux of a tilted disc cutting an ideal solenoid is unsupported")
    if d + r <= R:
        return sign * sol.total_flux * (r / R) ** 2
    # lens area of two intersecting circles
    a1 = r * r * math.acos((d * d + r * r - R * R) / (2 * d * r))
    a2 = R * R * math.acos((d * d + R * R - r * r) / (2 * d * R))
    a3 = 0.5 * math.sqrt((-d + r + R) * (d + r - R) * (d - r + R) * (d + r + R))
    return sign * sol.total_flux * (a1 + a2 - a3) / (math.pi * R * R)


def _polygon_flux(source, path, rtol, level):
    v = np.asarray(path.vertices)[:-1]
    centroid = v.mean(axis=0)
    normal = np.zeros(3)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        normal += np.cross(a - centroid, b - centroid)
    if np.linalg.norm(normal) == 0:
        raise PathError("degenerate polygon")
    unit = normal / np.linalg.norm(normal)
    if np.max(np.abs((v - centroid) @ unit)) > 1e-9 * path.diameter:
        raise PathError("non-planar closed path: flux is only defined for planar paths")
    x, w = np.polynomial.legendre.leggauss(12)
    x, w = 0.5 * (x + 1), 0.5 * w

    def tri_flux(p0, p1, p2):
        # collapsed square: p0 + s (p1 - p0) + s t (p2 - p1), Jacobian s |cross|
        s, t = np.meshgrid(x, x, indexing="ij")
        pts = p0 + s[..., None] * (p1 - p0) + (s * t)[..., None] * (p2 - p1)
        jac = np.linalg.norm(np.cross(p1 - p0, p2 - p1))
        ws = np.outer(w * x, w)
        bn = b_field(source, pts.reshape(-1, 3), level) @ unit
        return float(np.sum(ws.ravel() * bn) * jac)

    def refine(p0, p1, p2, whole, depth):
        m01, m12, m20 = 0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)
        parts = [(p0, m01, m20), (m01, p1, m12), (m20, m12, p2), (m12, m20, m01)]
        vals = [tri_flux(*t) for t in parts]
        total = sum(vals)
        if depth >= 6 or abs(total - whole) <= rtol * max(abs(total), 1e-300):
            return total, abs(total - whole)
        out, err = 0.0, 0.0
        for t, val in zip(parts, vals):
            a, b_ = refine(*t, val, depth + 1)
            out += a
            err += b_
        return out, err

    flux, err = 0.0, 0.0
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        whole = tri_flux(centroid, a, b)
        val, e = refine(centroid, a, b, whole, 1)
        flux += val
        err += e
    return flux, err


def enclosed_flux(path, source, rtol=1e-10, n_angle=360, level=DEFAULT_LEVEL, atol=0.0):
    """Flux of ``B`` through the flat surface spanned by a closed path.

    Returns ``(flux, error)``. The flux is oriented by the path's
    circulation (right-hand rule). Pass ``atol`` when the flux may be
    close to zero; circular discs only.
    """
    if not path.closed:
        raise PathError("enclosed flux needs a closed path")
    if isinstance(path, CircleArc):
        sign = 1.0 if path.stop > path.start else -1.0
        if isinstance(source, IdealSolenoid):
            return sign * _ideal_flux(source, path), 0.0
        val, err = _disc_flux(source, path, rtol, n_angle, level, atol)
        check, _ = _disc_flux(source, path, rtol, 2 * n_angle, level, atol)
        return sign * float(val), float(err + abs(check - val))
    if isinstance(source, IdealSolenoid):
        raise PathError("ideal-solenoid flux is only closed-form for circular paths")
    return _polygon_flux(source, path, rtol, level)


# -- gauge (in)dependence --------------------------------------------------

def gauge_dependence_report(path, source, gauges, e=1.0, level=None, tolerances=None,
                            invariance_rtol=1e-6, rtol=PATH_RTOL, cache=None):
    """Phases of one path in several gauges and their pairwise differences.

    For open paths each difference is paired with the boundary term
    ``-e (Gamma_i(b) - Gamma_i(a) - Gamma_j(b) + Gamma_j(a))`` that it must
    equal; for closed paths the differences must vanish. ``cache`` maps
    gauge strings to already computed phases of this path and is filled in.
    """
    if len(gauges) < 2:
        raise ValueError("need at least two gauges")
    kwargs = {} if level is None else {"level": level}
    potentials = [make_potential(source, gname, tolerances=tolerances, **kwargs) for gname in gauges]
    cache = {} if cache is None else cache
    phases = []
    for gname, pot in zip(gauges, potentials):
        if gname not in cache:
            cache[gname] = ab_phase(path, pot, e, rtol)
        phases.append(cache[gname])
    report = {
        "closed": bool(path.closed),
        "phases": {r.gauge: r.value for r in phases},
        "errors": {r.gauge: r.error for r in phases},
        "pairs": [],
    }
    ends = path.endpoints
    gammas = None if path.closed else [pot.gauge_function(ends) for pot in potentials]
    scale = max(abs(r.value) for r in phases)
    worst = 0.0
    for i, j in combinations(range(len(potentials)), 2):
        diff = phases[i].value - phases[j].value
        pair = {"gauges": [phases[i].gauge, phases[j].gauge], "difference": float(diff)}
        if gammas is not None:
            boundary = -e * ((gammas[i][1] - gammas[i][0]) - (gammas[j][1] - gammas[j][0]))
            pair["boundary_term"] = float(boundary)
            pair["residual"] = float(diff - boundary)
            worst = max(worst, abs(float(diff - boundary)))
        else:
            worst = max(worst, abs(float(diff)))
        report["pairs"].append(pair)
    report["max_abs_residual"] = worst
    report["max_rel_residual"] = worst / scale if scale > 0 else 0.0
    report["passed"] = bool(report["max_rel_residual"] < invariance_rtol or worst == 0.0)
    return report


def path_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "circle":
            return CircleArc(spec["center"], spec["normal"], spec["radius"],
                             order=spec.get("order", 8))
        if kind == "arc":
            return CircleArc(spec["center"], spec["normal"], spec["radius"],
                             spec.get("start", 0.0), spec["stop"], order=spec.get("order", 8))
        if kind == "polyline":
            return Polyline(spec["vertices"], order=spec.get("order", 8))
    except KeyError as exc:
        raise PathError(f"path of kind {kind!r} is missing field {exc}") from None
    raise PathError(f"unknown path kind {kind!r}")
