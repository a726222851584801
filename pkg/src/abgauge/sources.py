"""Localized static current sources and their thin-wire discretization.

A source carries a strength ``g`` that multiplies its current everywhere:
segment currents, Fourier transforms and every field derived from them
are already scaled by ``g``.

Discretization level ``n`` puts ``45 * 2**n`` straight segments on each
turn of a circular winding (level 3 gives 360). Polyline edges are split
into ``2**n`` pieces.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from . import _kernels

SEGMENTS_PER_TURN = 45
DEFAULT_LEVEL = 1


class ClosedFormOnlyError(ValueError):
    """Raised when a closed-form-only source enters a quadrature pipeline."""


def _vec(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite 3-vector, got {v!r}")
    return tuple(float(c) for c in arr)


def _unit(v, name):
    arr = np.asarray(_vec(v, name))
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise ValueError(f"{name} must be nonzero")
    return tuple(float(c) for c in arr / norm)


def _positive(value, name):
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


def _finite(value, name):
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def orthonormal_frame(axis):
    """Return ``(u, v, w)`` right-handed with ``w`` along ``axis``."""
    w = np.asarray(axis, dtype=float)
    w = w / np.linalg.norm(w)
    helper = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


class CurrentSource:
    """Common behaviour of the source variants."""

    kind = "abstract"
    closed_form_only = False

    @property
    def scale(self):
        """Characteristic size: radius plus half-length."""
        return self.radius + getattr(self, "half_length", 0.0)

    def with_strength(self, g):
        from dataclasses import replace

        return replace(self, g=g)


@dataclass(frozen=True)
class CircularLoop(CurrentSource):
    radius: float
    center: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (0.0, 0.0, 1.0)
    current: float = 1.0
    g: float = 1.0

    kind = "loop"

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "radius"))
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "normal", _unit(self.normal, "normal"))
        object.__setattr__(self, "current", _finite(self.current, "current"))
        object.__setattr__(self, "g", _finite(self.g, "g"))


@dataclass(frozen=True)
class FiniteSolenoid(CurrentSource):
    """Solenoid of finite length.

    ``winding="helix"`` is a single helical wire closed by a return
    conductor that runs radially to the axis, back along it, and out to
    the start. ``winding="rings"`` stacks ``round(2 L n)`` coaxial closed
    rings at the centres of equal axial cells, so no wire crosses the
    midplane and the current has no axial component.
    """

    radius: float
    half_length: float
    turns_per_length: float
    current: float = 1.0
    axis: tuple = (0.0, 0.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    winding: str = "helix"
    g: float = 1.0

    kind = "solenoid"

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "radius"))
        object.__setattr__(self, "half_length", _positive(self.half_length, "half_length"))
        object.__setattr__(self, "turns_per_length",
                           _positive(self.turns_per_length, "turns_per_length"))
        object.__setattr__(self, "current", _finite(self.current, "current"))
        object.__setattr__(self, "axis", _unit(self.axis, "axis"))
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "g", _finite(self.g, "g"))
        if self.winding not in ("helix", "rings"):
            raise ValueError(f"winding must be 'helix' or 'rings', got {self.winding!r}")
        if self.turns < 1:
            raise ValueError("solenoid must have at least one turn")

    @property
    def turns(self):
        return int(round(2.0 * self.half_length * self.turns_per_length))

    @property
    def flux(self):
        """Long-solenoid flux ``g n I pi R^2``."""
        return self.g * self.turns_per_length * self.current * math.pi * self.radius ** 2


@dataclass(frozen=True)
class PolylineLoop(CurrentSource):
    vertices: tuple
    current: float = 1.0
    g: float = 1.0

    kind = "polyline"

    def __post_init__(self):
        verts = tuple(_vec(v, "vertex") for v in self.vertices)
        if len(verts) > 1 and np.allclose(verts[0], verts[-1], rtol=0, atol=1e-15):
            verts = verts[:-1]
        if len(verts) < 3:
            raise ValueError("a polyline loop needs at least three distinct vertices")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "current", _finite(self.current, "current"))
        object.__setattr__(self, "g", _finite(self.g, "g"))

    @property
    def scale(self):
        v = np.asarray(self.vertices)
        return float(np.max(np.linalg.norm(v - v.mean(axis=0), axis=1)))


@dataclass(frozen=True)
class IdealSolenoid(CurrentSource):
    """Infinitely long solenoid known only through its closed-form field."""

    radius: float
    flux: float
    axis: tuple = (0.0, 0.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    g: float = 1.0

    kind = "ideal_solenoid"
    closed_form_only = True

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "radius"))
        object.__setattr__(self, "flux", _finite(self.flux, "flux"))
        object.__setattr__(self, "axis", _unit(self.axis, "axis"))
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "g", _finite(self.g, "g"))

    @property
    def total_flux(self):
        return self.g * self.flux


@dataclass(frozen=True)
class CurrentSegmentSet:
    """Straight current elements, grouped into head-to-tail chains.

    ``current`` already includes the source strength. ``chains`` holds the
    index of the first segment of each chain plus a final sentinel.
    """

    start: np.ndarray
    end: np.ndarray
    current: np.ndarray
    chains: tuple
    level: int = 0
    closed: bool = True

    def __post_init__(self):
        for name in ("start", "end", "current"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.start.shape[0]

    @property
    def midpoint(self):
        return 0.5 * (self.start + self.end)

    @property
    def dl(self):
        return self.end - self.start

    @property
    def lengths(self):
        return np.linalg.norm(self.dl, axis=1)

    @property
    def total_length(self):
        return float(self.lengths.sum())

    def closure_vectors(self):
        """Sum of ``dl`` over each chain; zero for closed chains."""
        dl = self.dl
        return np.array([dl[i:j].sum(axis=0) for i, j in zip(self.chains[:-1], self.chains[1:])])

    def chain_gaps(self):
        """Largest head-to-tail mismatch in each chain, wrap-around included."""
        gaps = []
        for i, j in zip(self.chains[:-1], self.chains[1:]):
            tails = self.end[i:j]
            heads = np.roll(self.start[i:j], -1, axis=0)
            gaps.append(float(np.max(np.linalg.norm(tails - heads, axis=1))))
        return np.array(gaps)


def _chain(points, current, closed=True):
    pts = np.asarray(points, dtype=float)
    if closed:
        a, b = pts, np.roll(pts, -1, axis=0)
    else:
        a, b = pts[:-1], pts[1:]
    return a, b, np.full(len(a), float(current))


def _ring(center, axis, radius, nseg):
    u, v, _ = orthonormal_frame(axis)
    phi = 2.0 * np.pi * np.arange(nseg) / nseg
    return np.asarray(center) + radius * (np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v)


def _straight(p, q, nseg):
    t = np.arange(nseg)[:, None] / nseg
    return np.asarray(p) + t * (np.asarray(q) - np.asarray(p))


def helix_points(solenoid, level):
    """Vertices of the bare helix, first and last included."""
    u, v, w = orthonormal_frame(solenoid.axis)
    per_turn = SEGMENTS_PER_TURN * 2 ** level
    n = solenoid.turns * per_turn
    s = np.arange(n + 1) / n
    theta = 2.0 * np.pi * solenoid.turns * s
    c = np.asarray(solenoid.center)
    axial = (-solenoid.half_length + 2.0 * solenoid.half_length * s)[:, None] * w
    return c + axial + solenoid.radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)


def _assemble(pieces, level, closed=True):
    starts, ends, currents, chains = [], [], [], [0]
    for a, b, cur in pieces:
        starts.append(a)
        ends.append(b)
        currents.append(cur)
        chains.append(chains[-1] + len(a))
    return CurrentSegmentSet(np.concatenate(starts), np.concatenate(ends),
                             np.concatenate(currents), tuple(chains), level, closed)


def discretize(source, level=DEFAULT_LEVEL):
    """Discretize a localized source into closed chains of straight segments."""
    if isinstance(source, CurrentSegmentSet):
        return source
    return _discretize_cached(source, int(level))


@lru_cache(maxsize=64)
def _discretize_cached(source, level):
    if level < 0:
        raise ValueError("level must be >= 0")
    if source.closed_form_only:
        raise ClosedFormOnlyError(
            f"closed-form-only source ({source.kind}) cannot be discretized")
    per_turn = SEGMENTS_PER_TURN * 2 ** level
    if isinstance(source, CircularLoop):
        pts = _ring(source.center, source.normal, source.radius, per_turn)
        return _assemble([_chain(pts, source.g * source.current)], level)
    if isinstance(source, PolylineLoop):
        verts = np.asarray(source.vertices)
        sub = 2 ** level
        pts = np.concatenate([_straight(p, q, sub)
                              for p, q in zip(verts, np.roll(verts, -1, axis=0))])
        return _assemble([_chain(pts, source.g * source.current)], level)
    if isinstance(source, FiniteSolenoid):
        cur = source.g * source.current
        w = np.asarray(source.axis)
        c = np.asarray(source.center)
        if source.winding == "rings":
            cell = 2.0 * source.half_length / source.turns
            pieces = []
            for j in range(source.turns):
                offset = -source.half_length + (j + 0.5) * cell
                pieces.append(_chain(_ring(c + offset * w, w, source.radius, per_turn), cur))
            return _assemble(pieces, level)
        helix = helix_points(source, level)
        seg_len = float(np.linalg.norm(helix[1] - helix[0]))
        top, bottom = c + source.half_length * w, c - source.half_length * w
        n_rad = max(1, int(math.ceil(source.radius / seg_len)))
        n_ax = max(1, int(math.ceil(2.0 * source.half_length / seg_len)))
        pts = np.concatenate([helix[:-1], _straight(helix[-1], top, n_rad),
                              _straight(top, bottom, n_ax), _straight(bottom, helix[0], n_rad)])
        return _assemble([_chain(pts, cur)], level)
    raise TypeError(f"unsupported source {source!r}")


def open_helix(solenoid, level=DEFAULT_LEVEL):
    """The helix of ``solenoid`` without its return conductor (not conserved)."""
    pts = helix_points(solenoid, level)
    a, b, cur = _chain(pts, solenoid.g * solenoid.current, closed=False)
    return CurrentSegmentSet(a, b, cur, (0, len(a)), level, closed=False)


def fourier_current(source, k, level=DEFAULT_LEVEL):
    """Fourier transform ``J_k`` of the discretized current.

    ``k`` may be a single wave vector or an ``(M, 3)`` array; the result
    has the matching shape with complex entries.
    """
    segs = discretize(source, level)
    kk = np.asarray(k, dtype=float)
    single = kk.ndim == 1
    kk = np.ascontiguousarray(np.atleast_2d(kk))
    out = _kernels.fourier(kk, segs.start, segs.end, segs.current)
    return out[0] if single else out


def probe_wavevectors(scale, count=24):
    """Deterministic spread of test wave vectors with ``|k| scale`` in [0.3, 8]."""
    i = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azim = np.pi * (1.0 + 5.0 ** 0.5) * i
    dirs = np.column_stack([np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim),
                            np.cos(polar)])
    mags = np.geomspace(0.3, 8.0, count) / scale
    return dirs * mags[:, None]


def divergence_residual(source, level=DEFAULT_LEVEL, wavevectors=None):
    """Max over probe ``k`` of ``|k . J_k| / (|k| |J_k|)``."""
    segs = discretize(source, level)
    if wavevectors is None:
        scale = getattr(source, "scale", None) or float(np.max(segs.lengths)) * len(segs)
        wavevectors = probe_wavevectors(scale)
    k = np.atleast_2d(np.asarray(wavevectors, dtype=float))
    jk = fourier_current(segs, k)
    num = np.abs(np.einsum("ij,ij->i", k, jk))
    den = np.linalg.norm(k, axis=1) * np.linalg.norm(jk, axis=1)
    ok = den > 1e-300
    if not np.any(ok):
        return 0.0
    return float(np.max(num[ok] / den[ok]))


def source_from_dict(spec):
    """Build a source from its scenario-file object."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    cls = {"loop": CircularLoop, "circular_loop": CircularLoop,
           "solenoid": FiniteSolenoid, "finite_solenoid": FiniteSolenoid,
           "polyline": PolylineLoop, "ideal_solenoid": IdealSolenoid}.get(kind)
    if cls is None:
        raise ValueError(f"unknown source kind {kind!r}")
    if cls is PolylineLoop:
        spec["vertices"] = tuple(tuple(v) for v in spec["vertices"])
    for key in ("center", "normal", "axis"):
        if key in spec:
            spec[key] = tuple(spec[key])
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ValueError(f"bad field for source kind {kind!r}: {exc}") from None


def source_to_dict(source):
    from dataclasses import asdict

    out = {"kind": source.kind}
    for key, value in asdict(source).items():
        out[key] = [list(v) for v in value] if key == "vertices" else (
            list(value) if isinstance(value, tuple) else value)
    return out
