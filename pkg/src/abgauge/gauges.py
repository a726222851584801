"""External vector potential in the Coulomb, axial and shifted gauges.

All evaluators take positions as ``(3,)`` or ``(P, 3)`` arrays and return
values already multiplied by the source strength ``g``. The gauge
function ``Gamma`` of a potential is defined relative to the Coulomb one,
``A = A_coulomb + grad Gamma``.
"""

from dataclasses import dataclass, field, replace
import math
import re

import numba as nb
import numpy as np

from . import _kernels
from .quadrature import adaptive
from .sources import DEFAULT_LEVEL, IdealSolenoid, discretize


class NearSingularError(ValueError):
    """Evaluation point lies inside the thin-wire exclusion zone."""


class TailBoundError(RuntimeError):
    """Estimated truncation tail of the axial antiderivative is too large."""


class GaugeSpecError(ValueError):
    """Unparseable or unsupported gauge / gauge-function specification."""


@dataclass(frozen=True)
class Tolerances:
    quad_rtol: float = 1e-10
    derivative_step: float = 1e-4
    tail_cutoff: float = 20.0
    tail_bound: float = 1e-2

    def __post_init__(self):
        for name in ("quad_rtol", "derivative_step", "tail_cutoff", "tail_bound"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"tolerance {name} must be positive, got {value!r}")

    def step(self, source):
        return self.derivative_step * source.radius

    def cutoff(self, source):
        return self.tail_cutoff * source.scale


def as_points(x):
    """Validate positions; returns ``(points, single)``."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"positions must have shape (3,) or (P, 3), got {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    return np.ascontiguousarray(arr), single


def _unpack(values, single):
    return values[0] if single else values


def check_clearance(segs, pts):
    clearance = _kernels.wire_clearance(pts, segs.start, segs.end)
    bad = clearance <= 1.0
    if np.any(bad):
        where = pts[np.argmax(bad)]
        raise NearSingularError(
            f"near-singular evaluation at {where.tolist()}: within half a segment "
            f"length of the wire")


# -- closed-form ideal solenoid ---------------------------------------------

def _cylindrical(sol, pts):
    w = np.asarray(sol.axis)
    r = pts - np.asarray(sol.center)
    perp = r - np.outer(r @ w, w)
    rho = np.linalg.norm(perp, axis=1)
    return w, perp, rho


def ideal_solenoid_A(solenoid, x):
    """Azimuthal potential ``Phi rho / (2 pi R^2)`` inside, ``Phi / (2 pi rho)`` outside."""
    pts, single = as_points(x)
    w, perp, rho = _cylindrical(solenoid, pts)
    flux = solenoid.total_flux
    R = solenoid.radius
    # A_phi / rho, so that A = (A_phi / rho) * (w x perp)
    ratio = np.where(rho < R, flux / (2 * math.pi * R ** 2),
                     flux / (2 * math.pi * np.where(rho > 0, rho, 1.0) ** 2))
    out = ratio[:, None] * np.cross(w, perp)
    return _unpack(out, single)


def ideal_solenoid_B(solenoid, x):
    pts, single = as_points(x)
    w, _, rho = _cylindrical(solenoid, pts)
    inside = rho < solenoid.radius
    out = np.outer(np.where(inside, solenoid.total_flux / (math.pi * solenoid.radius ** 2), 0.0), w)
    return _unpack(out, single)


# -- Coulomb gauge ---------------------------------------------------------

def coulomb_A(source, x, level=DEFAULT_LEVEL, check=True):
    """Biot-Savart vector potential, exact for the discretized wire."""
    if isinstance(source, IdealSolenoid):
        return ideal_solenoid_A(source, x)
    pts, single = as_points(x)
    segs = discretize(source, level)
    if check:
        check_clearance(segs, pts)
    return _unpack(_kernels.potential(pts, segs.start, segs.end, segs.current), single)


def coulomb_A_error(source, x, level=DEFAULT_LEVEL):
    """Discretization error estimate from comparing ``level`` and ``level + 1``."""
    return np.linalg.norm(coulomb_A(source, x, level + 1) - coulomb_A(source, x, level), axis=-1)


def b_field(source, x, level=DEFAULT_LEVEL, check=True):
    """Direct Biot-Savart magnetic field (not a derivative of any potential)."""
    if isinstance(source, IdealSolenoid):
        return ideal_solenoid_B(source, x)
    pts, single = as_points(x)
    segs = discretize(source, level)
    if check:
        check_clearance(segs, pts)
    return _unpack(_kernels.bfield(pts, segs.start, segs.end, segs.current), single)


# -- axial gauge -----------------------------------------------------------

@nb.njit(cache=True)
def _axial_line(xp, yp, zs, a, b, cur):
    """``A_3``, ``d1 A_3`` and ``d2 A_3`` along the vertical line through (xp, yp)."""
    n, nseg = zs.shape[0], a.shape[0]
    out = np.zeros((n, 3))
    inv = 1.0 / (4.0 * math.pi)
    for i in range(n):
        z = zs[i]
        v0 = 0.0
        v1 = 0.0
        v2 = 0.0
        for s in range(nseg):
            dz = b[s, 2] - a[s, 2]
            if dz == 0.0:
                continue
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            ax = xp - a[s, 0]
            ay = yp - a[s, 1]
            az = z - a[s, 2]
            bx = xp - b[s, 0]
            by = yp - b[s, 1]
            bz = z - b[s, 2]
            ra = math.sqrt(ax * ax + ay * ay + az * az)
            rb = math.sqrt(bx * bx + by * by + bz * bz)
            ssum = ra + rb
            w = cur[s] * dz / length
            v0 += w * 2.0 * math.atanh(length / ssum)
            c = -2.0 * length * w / ((ssum - length) * (ssum + length))
            v1 += c * (ax / ra + bx / rb)
            v2 += c * (ay / ra + by / rb)
        out[i, 0] = v0 * inv
        out[i, 1] = v1 * inv
        out[i, 2] = v2 * inv
    return out


@nb.njit(cache=True)
def _line_clearance(xp, yp, a, b):
    """Smallest in-plane distance from the line to a segment, over half its length."""
    best = np.inf
    for s in range(a.shape[0]):
        dx = b[s, 0] - a[s, 0]
        dy = b[s, 1] - a[s, 1]
        dz = b[s, 2] - a[s, 2]
        half = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
        ax = xp - a[s, 0]
        ay = yp - a[s, 1]
        l2 = dx * dx + dy * dy
        t = 0.0 if l2 == 0.0 else min(1.0, max(0.0, (ax * dx + ay * dy) / l2))
        ex = ax - t * dx
        ey = ay - t * dy
        r = math.sqrt(ex * ex + ey * ey) / half
        if r < best:
            best = r
    return best


@dataclass(frozen=True)
class AxialLine:
    """Principal-value z-antiderivative data at one point."""

    chi: float
    grad: np.ndarray
    tail: float
    error: float
    mass: float


def _line_breakpoints(segs, z, cutoff):
    zmin = float(min(segs.start[:, 2].min(), segs.end[:, 2].min()))
    zmax = float(max(segs.start[:, 2].max(), segs.end[:, 2].max()))
    pad = max(0.05 * (zmax - zmin), 1e-3 * cutoff)
    lo, hi = zmin - pad, zmax + pad
    pts = [-cutoff, cutoff, z, lo, hi]
    pts += list(np.linspace(lo, hi, 9))
    step = max(hi - lo, pad)
    d = step
    while hi + d < cutoff:
        pts += [hi + d, lo - d]
        d *= 2.0
    pts = np.unique(np.clip(pts, -cutoff, cutoff))
    return pts


def axial_line(source, x, level=DEFAULT_LEVEL, tolerances=Tolerances(), check_tail=True):
    """chi, grad chi and the tail estimate at a single point."""
    segs = discretize(source, level)
    cutoff = tolerances.cutoff(source)
    xp, yp, z = (float(c) for c in x)
    if abs(z) >= cutoff:
        raise ValueError(f"|z| = {abs(z)} lies beyond the axial cutoff {cutoff}")
    keep = (segs.end[:, 2] - segs.start[:, 2]) != 0.0
    a = np.ascontiguousarray(segs.start[keep])
    b = np.ascontiguousarray(segs.end[keep])
    cur = np.ascontiguousarray(segs.current[keep])
    if a.shape[0] == 0:
        return AxialLine(0.0, np.zeros(3), 0.0, 0.0, 0.0)
    if _line_clearance(xp, yp, a, b) <= 1.0:
        raise NearSingularError(
            f"the z-line through ({xp}, {yp}) passes within half a segment length of "
            f"the wire; the axial gauge function is singular there")

    def integrand(t):
        vals = _axial_line(xp, yp, t, a, b, cur)
        sign = np.where(t < z, 0.5, -0.5)
        # columns: chi, d1 chi, d2 chi, and |A_3| for the mass scale
        return np.column_stack([sign[:, None] * vals, np.abs(vals[:, 0])])

    bp = _line_breakpoints(segs, z, cutoff)
    val, err = adaptive(integrand, bp, rtol=tolerances.quad_rtol)
    ends = _axial_line(xp, yp, np.array([-cutoff, cutoff, z]), a, b, cur)
    # A_3 falls off at least like 1/z^2: int_L^inf ~ L * A_3(L)
    tail = 0.5 * cutoff * (ends[0, 0] - ends[1, 0])
    mass = float(val[3])
    # absolute floor so lines where A_3 vanishes by symmetry are not judged on rounding
    floor = 1e-12 * float(np.sum(np.abs(segs.current) * segs.lengths)) / (4 * math.pi)
    if check_tail and abs(tail) > tolerances.tail_bound * max(mass, floor):
        raise TailBoundError(
            f"axial tail estimate {tail:.3e} exceeds bound "
            f"{tolerances.tail_bound:.1e} x line mass {mass:.3e}")
    grad = np.array([val[1], val[2], ends[2, 0]])
    return AxialLine(float(val[0]), grad, float(tail), float(err), mass)


def axial_chi(source, x, level=DEFAULT_LEVEL, tolerances=Tolerances()):
    """``chi = (1/d3) A_3``, symmetric antiderivative cut off at +-L_max."""
    if isinstance(source, IdealSolenoid):
        raise GaugeSpecError("axial gauge needs a localized source")
    pts, single = as_points(x)
    out = np.array([axial_line(source, p, level, tolerances).chi for p in pts])
    return _unpack(out, single)


def axial_chi_gradient(source, x, level=DEFAULT_LEVEL, tolerances=Tolerances()):
    pts, single = as_points(x)
    out = np.array([axial_line(source, p, level, tolerances).grad for p in pts])
    return _unpack(out, single)


def axial_A(source, x, level=DEFAULT_LEVEL, tolerances=Tolerances()):
    """``A_coulomb - grad chi``; the third component vanishes."""
    if isinstance(source, IdealSolenoid):
        raise GaugeSpecError("axial gauge needs a localized source")
    pts, single = as_points(x)
    base = coulomb_A(source, pts, level)
    grad = axial_chi_gradient(source, pts, level, tolerances)
    return _unpack(base - grad, single)


# -- gauge shifts ----------------------------------------------------------

_MONOMIAL = re.compile(r"^(1|[xyz]{1,3})$")


@dataclass(frozen=True)
class GaugeShift:
    """Gauge function ``Lambda = P(x - c) * exp(-|x - c|^2 / sigma^2)``.

    ``terms`` maps exponent triples to coefficients, total degree <= 3.
    Without an envelope only a constant polynomial is allowed, so every
    supported shift stays bounded.
    """

    terms: tuple
    sigma: float | None = None
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        terms = tuple(sorted((tuple(int(p) for p in powers), float(c)) for powers, c in self.terms))
        for powers, coef in terms:
            if len(powers) != 3 or min(powers) < 0 or sum(powers) > 3:
                raise GaugeSpecError(f"unsupported monomial exponents {powers}")
            if not math.isfinite(coef):
                raise GaugeSpecError("gauge-function coefficients must be finite")
            if self.sigma is None and sum(powers) > 0 and coef != 0.0:
                raise GaugeSpecError(
                    "a non-constant gauge function needs a Gaussian envelope (sigma)")
        if self.sigma is not None and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise GaugeSpecError("sigma must be positive")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @classmethod
    def parse(cls, text):
        """Parse ``"1=0.5,xy=0.2,sigma=1.0,center=0;0;0"``."""
        terms, sigma, center = [], None, (0.0, 0.0, 0.0)
        if not text.strip():
            return cls(terms=())
        for item in text.split(","):
            if "=" not in item:
                raise GaugeSpecError(f"expected key=value in gauge function spec, got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            try:
                if key == "sigma":
                    sigma = float(value)
                elif key == "center":
                    center = tuple(float(c) for c in value.split(";"))
                    if len(center) != 3:
                        raise ValueError
                elif _MONOMIAL.match(key):
                    powers = (0, 0, 0) if key == "1" else tuple(key.count(c) for c in "xyz")
                    terms.append((powers, float(value)))
                else:
                    raise GaugeSpecError(f"unknown gauge function key {key!r}")
            except ValueError as exc:
                if isinstance(exc, GaugeSpecError):
                    raise
                raise GaugeSpecError(f"bad value for {key!r}: {value!r}") from None
        return cls(terms=tuple(terms), sigma=sigma, center=center)

    def spec(self):
        parts = []
        for powers, coef in self.terms:
            name = "".join(c * p for c, p in zip("xyz", powers)) or "1"
            parts.append(f"{name}={coef!r}")
        if self.sigma is not None:
            parts.append(f"sigma={self.sigma!r}")
        if any(self.center):
            parts.append("center=" + ";".join(repr(c) for c in self.center))
        return ",".join(parts)

    def _poly(self, r):
        val = np.zeros(len(r))
        grad = np.zeros((len(r), 3))
        for powers, coef in self.terms:
            mono = coef * np.prod(r ** np.array(powers), axis=1)
            val += mono
            for i in range(3):
                if powers[i]:
                    p = list(powers)
                    p[i] -= 1
                    grad[:, i] += coef * powers[i] * np.prod(r ** np.array(p), axis=1)
        return val, grad

    def value(self, x):
        pts, single = as_points(x)
        r = pts - np.asarray(self.center)
        val, _ = self._poly(r)
        if self.sigma is not None:
            val = val * np.exp(-np.sum(r * r, axis=1) / self.sigma ** 2)
        return _unpack(val, single)

    def gradient(self, x):
        pts, single = as_points(x)
        r = pts - np.asarray(self.center)
        val, grad = self._poly(r)
        if self.sigma is not None:
            env = np.exp(-np.sum(r * r, axis=1) / self.sigma ** 2)
            grad = (grad - (2.0 / self.sigma ** 2) * val[:, None] * r) * env[:, None]
        return _unpack(grad, single)


# -- the evaluator type ----------------------------------------------------

@dataclass(frozen=True)
class GaugePotential:
    """Vector potential of ``source`` in a chosen gauge.

    ``gauge`` is ``"coulomb"``, ``"axial"`` or ``"shifted"``; a shifted
    potential adds ``g grad Lambda`` to ``base``.
    """

    source: object
    gauge: str = "coulomb"
    level: int = DEFAULT_LEVEL
    tolerances: Tolerances = field(default_factory=Tolerances)
    shift: GaugeShift | None = None
    base: "GaugePotential | None" = None

    def __post_init__(self):
        if self.gauge not in ("coulomb", "axial", "shifted"):
            raise GaugeSpecError(f"unknown gauge {self.gauge!r}")
        if self.gauge == "shifted" and (self.shift is None or self.base is None):
            raise GaugeSpecError("a shifted gauge needs a base potential and a shift")

    @property
    def tag(self):
        if self.gauge != "shifted":
            return self.gauge
        prefix = "" if self.base.gauge == "coulomb" else self.base.tag + "+"
        return f"{prefix}shifted:{self.shift.spec()}"

    @property
    def g(self):
        return self.source.g

    def __call__(self, x):
        if self.gauge == "coulomb":
            return coulomb_A(self.source, x, self.level)
        if self.gauge == "axial":
            return axial_A(self.source, x, self.level, self.tolerances)
        return shifted_A(self.base, self.shift, x)

    def gauge_function(self, x):
        """``Gamma`` with ``A = A_coulomb + grad Gamma``."""
        pts, single = as_points(x)
        if self.gauge == "coulomb":
            out = np.zeros(len(pts))
        elif self.gauge == "axial":
            out = -axial_chi(self.source, pts, self.level, self.tolerances)
        else:
            out = self.base.gauge_function(pts) + self.g * self.shift.value(pts)
        return _unpack(out, single)

    def step(self):
        return self.tolerances.step(self.source)

    def curl(self, x, h=None):
        return curl_fd(self, x, h or self.step())

    def divergence(self, x, h=None):
        return divergence_fd(self, x, h or self.step())


def shifted_A(base, shift, x):
    """``base(x) + g grad Lambda(x)`` with the gradient taken analytically."""
    if isinstance(shift, str):
        shift = GaugeShift.parse(shift)
    return base(x) + base.g * shift.gradient(x)


def validate_gauge(gauge):
    """Check a gauge string without building anything; returns it stripped."""
    if not isinstance(gauge, str):
        raise GaugeSpecError(f"gauge must be a string, got {gauge!r}")
    text = gauge.strip()
    rest = text[len("axial+"):] if text.startswith("axial+shifted:") else text
    if rest in ("coulomb", "axial"):
        return text
    if rest.startswith("shifted:"):
        GaugeShift.parse(rest[len("shifted:"):])
        return text
    raise GaugeSpecError(
        f"malformed gauge {gauge!r}; expected 'coulomb', 'axial' or 'shifted:<spec>'")


def make_potential(source, gauge="coulomb", level=DEFAULT_LEVEL, tolerances=None):
    """Build a potential from a gauge string.

    Accepted: ``coulomb``, ``axial``, ``shifted:<spec>`` (on the Coulomb
    potential) and ``axial+shifted:<spec>``.
    """
    tolerances = tolerances or Tolerances()
    if not isinstance(gauge, str):
        raise GaugeSpecError(f"gauge must be a string, got {gauge!r}")
    text = gauge.strip()
    base_name = "coulomb"
    if text.startswith("axial+shifted:"):
        base_name, text = "axial", text[len("axial+"):]
    if text in ("coulomb", "axial"):
        if text == "axial" and isinstance(source, IdealSolenoid):
            raise GaugeSpecError("axial gauge needs a localized source")
        return GaugePotential(source, text, level, tolerances)
    if text.startswith("shifted:"):
        base = make_potential(source, base_name, level, tolerances)
        return GaugePotential(source, "shifted", level, tolerances,
                              shift=GaugeShift.parse(text[len("shifted:"):]), base=base)
    raise GaugeSpecError(
        f"malformed gauge {gauge!r}; expected 'coulomb', 'axial' or 'shifted:<spec>'")


# -- finite differences ----------------------------------------------------

def jacobian_fd(f, x, h, richardson=True):
    """``J[p, i, j] = d f_i / d x_j`` by central differences.

    With ``richardson`` the steps ``h`` and ``h/2`` are combined to cancel
    the leading ``h^2`` error.
    """
    pts, single = as_points(x)
    P = len(pts)

    def central(step):
        offsets = np.concatenate([np.eye(3) * step, -np.eye(3) * step])
        probe = (pts[:, None, :] + offsets[None]).reshape(-1, 3)
        vals = np.asarray(f(probe)).reshape(P, 6, 3)
        return np.transpose((vals[:, :3] - vals[:, 3:]) / (2.0 * step), (0, 2, 1))

    jac = central(h)
    if richardson:
        jac = (4.0 * central(0.5 * h) - jac) / 3.0
    return _unpack(jac, single)


def curl_fd(f, x, h, richardson=True):
    j = np.asarray(jacobian_fd(f, np.atleast_2d(x), h, richardson))
    out = np.column_stack([j[:, 2, 1] - j[:, 1, 2], j[:, 0, 2] - j[:, 2, 0],
                           j[:, 1, 0] - j[:, 0, 1]])
    return out[0] if np.ndim(x) == 1 else out


def divergence_fd(f, x, h, richardson=True):
    j = np.asarray(jacobian_fd(f, np.atleast_2d(x), h, richardson))
    out = np.trace(j, axis1=1, axis2=2)
    return out[0] if np.ndim(x) == 1 else out


def potential_jacobian(source, x, level=DEFAULT_LEVEL):
    """Analytic ``dA_i/dx_j`` of the Coulomb potential."""
    pts, single = as_points(x)
    segs = discretize(source, level)
    check_clearance(segs, pts)
    return _unpack(_kernels.potential_jacobian(pts, segs.start, segs.end, segs.current), single)
