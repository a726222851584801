"""Photon modes on a finite momentum lattice and the energy corrections.

Modes sit at ``k = dk (n + offset)`` for ``n`` in ``[-N, N-1]`` on every
axis. With the default half-integer offset the lattice is symmetric under
``k -> -k`` and never contains ``k_3 = 0``, which is what the principal
value sums over ``1/k_3`` rely on. Each mode carries the cell weight
``dk**3``, its two transverse polarizations and the coherent amplitude
``alpha = e . J_k / sqrt(2 omega**3)``.

The source current already includes its strength ``g``, so every amplitude
and energy returned here is linear in ``g``. The particle charge is
``particle.e``.
"""

from dataclasses import dataclass, field
import csv
import math
import warnings

import numpy as np

from . import _kernels
from .quadrature import _pairwise_sum
from .sources import DEFAULT_LEVEL, discretize

INV_2PI_32 = (2.0 * math.pi) ** -1.5


class GridSymmetryError(ValueError):
    """An operation needs the ``k -> -k`` symmetric lattice."""


class ResolutionWarning(UserWarning):
    """A point lies close to the edge of what the lattice resolves."""


def polarization_basis(k):
    """Transverse pair ``(e1, e2)`` for one or many wave vectors.

    ``e1 = z x k_hat / |z x k_hat|`` (``x_hat`` made orthogonal to ``k_hat``
    when ``k`` is within 1e-9 of the third axis) and ``e2 = k_hat x e1``, so
    ``(e1, e2, k_hat)`` is right-handed.
    """
    kk = np.asarray(k, dtype=float)
    single = kk.ndim == 1
    kk = np.atleast_2d(kk)
    norm = np.linalg.norm(kk, axis=1)
    if np.any(norm == 0):
        raise ValueError("polarization basis undefined at k = 0")
    khat = kk / norm[:, None]
    zx = np.column_stack([-khat[:, 1], khat[:, 0], np.zeros(len(khat))])
    s = np.linalg.norm(zx, axis=1)
    along = s <= 1e-9
    xo = np.array([1.0, 0.0, 0.0]) - khat * khat[:, :1]
    xo /= np.where(along, np.linalg.norm(xo, axis=1), 1.0)[:, None]
    e1 = np.where(along[:, None], xo, zx / np.where(along, 1.0, s)[:, None])
    e2 = np.cross(khat, e1)
    if single:
        return e1[0], e2[0]
    return e1, e2


def completeness_residual(k):
    """Elementwise max of ``|sum_l e_i e_j - (delta_ij - k_i k_j / k^2)|`` per mode."""
    kk = np.atleast_2d(np.asarray(k, dtype=float))
    e1, e2 = polarization_basis(kk)
    khat = kk / np.linalg.norm(kk, axis=1)[:, None]
    proj = np.eye(3) - khat[:, :, None] * khat[:, None, :]
    outer = e1[:, :, None] * e1[:, None, :] + e2[:, :, None] * e2[:, None, :]
    return np.abs(outer - proj).max(axis=(1, 2))


@dataclass(frozen=True)
class ModeChunk:
    """A block of modes. On symmetric grids the second half mirrors the first."""

    k: np.ndarray
    omega: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    current: np.ndarray
    alpha: np.ndarray

    @property
    def pol(self):
        return np.stack([self.e1, self.e2], axis=1)


class ModeGrid:
    """Offset momentum lattice carrying polarizations and coherent amplitudes.

    Modes are produced slab by slab in a fixed order. Small grids keep
    their slabs in memory; larger ones rebuild them on every pass.
    """

    def __init__(self, spacing, extent, source, level=DEFAULT_LEVEL, offset=0.5,
                 cache_limit=2_000_000):
        if not (spacing > 0 and math.isfinite(spacing)):
            raise ValueError("grid spacing must be positive")
        if int(extent) != extent or extent < 2:
            raise ValueError("grid extent N must be an integer >= 2")
        if not 0.0 < offset < 1.0:
            raise ValueError("lattice offset must lie strictly between 0 and 1 (excludes k3 = 0)")
        self.spacing = float(spacing)
        self.extent = int(extent)
        self.offset = float(offset)
        self.source = source
        self.level = level
        self._segs = discretize(source, level)
        self._tables = None
        self._cache = [] if self.size <= cache_limit else None
        self._filled = False

    @property
    def symmetric(self):
        return self.offset == 0.5

    @property
    def size(self):
        return (2 * self.extent) ** 3

    @property
    def weight(self):
        return self.spacing ** 3

    @property
    def k_max(self):
        return self.spacing * (self.extent - 1 + self.offset)

    @property
    def resolvable_radius(self):
        return math.pi / self.spacing

    def axis_values(self):
        n = np.arange(-self.extent, self.extent)
        return self.spacing * (n + self.offset)

    def describe(self):
        return {"spacing": self.spacing, "extent": self.extent, "offset": self.offset,
                "modes": self.size, "k_max": self.k_max, "level": self.level,
                "symmetric": self.symmetric}

    def _plane(self, i3):
        """Wave vectors and ``J_k`` on the lattice plane with third index ``i3``."""
        ax = self.axis_values()
        segs = self._segs
        if self._tables is None:
            mid = 0.5 * (segs.start + segs.end)
            self._tables = tuple(
                np.ascontiguousarray(np.stack([_kernels.axis_phases(ax, np.ascontiguousarray(p[:, j]))
                                               for j in range(3)]))
                for p in (segs.start, segs.end, mid))
        ta, tb, tm = self._tables
        cur = _kernels.fourier_slab(ax, ax, ax[i3], i3, ta, tb, tm,
                                    segs.start, segs.end, segs.current)
        k1, k2 = np.meshgrid(ax, ax, indexing="ij")
        k = np.column_stack([k1.ravel(), k2.ravel(), np.full(k1.size, ax[i3])])
        return k, cur

    def _slab(self, i):
        if self.symmetric:
            half, cur = self._plane(self.extent + i)
            k = np.concatenate([half, -half])
            cur = np.concatenate([cur, np.conj(cur)])
        else:
            k, cur = self._plane(i)
        omega = np.linalg.norm(k, axis=1)
        e1, e2 = polarization_basis(k)
        amp = 1.0 / np.sqrt(2.0 * omega ** 3)
        alpha = np.column_stack([np.einsum("ij,ij->i", e1, cur), np.einsum("ij,ij->i", e2, cur)])
        alpha *= amp[:, None]
        return ModeChunk(k, omega, e1, e2, cur, alpha)

    def chunks(self):
        if self._cache is not None and self._filled:
            yield from self._cache
            return
        count = self.extent if self.symmetric else 2 * self.extent
        built = []
        for i in range(count):
            chunk = self._slab(i)
            if self._cache is not None:
                built.append(chunk)
            yield chunk
        if self._cache is not None:
            self._cache[:] = built
            self._filled = True

    def reduce(self, fn):
        """Pairwise total of ``fn(chunk)`` over all chunks, in chunk order."""
        parts = [np.asarray(fn(c)) for c in self.chunks()]
        return _pairwise_sum(np.stack(parts))

    def check_resolvable(self, x):
        reach = float(np.max(np.abs(np.asarray(x, dtype=float))))
        if reach > 0.5 * self.resolvable_radius:
            warnings.warn(
                f"point at |x|_inf = {reach:.3g} is beyond half the resolvable radius "
                f"pi/dk = {self.resolvable_radius:.3g}; lattice images will contaminate it",
                ResolutionWarning, stacklevel=3)

    def export_modes(self, path, limit=None):
        """Write ``k, omega, alpha`` per mode as CSV; returns the row count."""
        rows = 0
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k1", "k2", "k3", "omega", "alpha1_re", "alpha1_im",
                          "alpha2_re", "alpha2_im"])
            for c in self.chunks():
                for kv, om, al in zip(c.k, c.omega, c.alpha):
                    if limit is not None and rows >= limit:
                        return rows
                    out.writerow([repr(float(v)) for v in kv] + [repr(float(om))]
                                 + [repr(float(v)) for a in al for v in (a.real, a.imag)])
                    rows += 1
        return rows


def build_grid(spacing, extent, source, level=DEFAULT_LEVEL, **kwargs):
    return ModeGrid(spacing, extent, source, level, **kwargs)


def default_spacing(source):
    return math.pi / (8.0 * source.radius)


def _axial_pol(chunk):
    """``e^X = e - k e_3 / k_3`` for both polarizations, shape ``(n, 2, 3)``."""
    pol = chunk.pol
    return pol - chunk.k[:, None, :] * (pol[:, :, 2] / chunk.k[:, 2, None])[:, :, None]


def _field_pol(chunk, gauge):
    if gauge == "coulomb":
        return chunk.pol
    if gauge == "axial":
        return _axial_pol(chunk)
    raise ValueError(f"mode sums support the coulomb and axial gauges, not {gauge!r}")


@dataclass(frozen=True)
class EnergyCorrection:
    value: float
    order: str
    gauge: str
    imag_residual: float
    details: dict = field(default_factory=dict)
    per_mode: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.value, float):
            object.__setattr__(self, "value", float(self.value))


def reconstruct_A(grid, x, gauge="coulomb", return_imag=False):
    """Coherent-state expectation of the vector potential at ``x``.

    Sums ``w / sqrt((2pi)^3 2 omega) sum_l e (alpha e^{ikx} + c.c.)``.
    The one-sided sum (``alpha e^{ikx}`` only) is real when the lattice is
    symmetric; its imaginary part is returned with ``return_imag``.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.ndim(x) == 1
    grid.check_resolvable(pts)

    def part(c):
        pol = _field_pol(c, gauge)
        amp = INV_2PI_32 / np.sqrt(2.0 * c.omega)
        vec = np.einsum("nl,nli->ni", c.alpha, pol) * amp[:, None]
        phase = np.exp(1j * (c.k @ pts.T))
        return np.einsum("ni,np->pi", vec, phase)

    one_sided = grid.reduce(part) * grid.weight
    value = 2.0 * one_sided.real
    imag = one_sided.imag
    if single:
        value, imag = value[0], imag[0]
    return (value, imag) if return_imag else value


def _imag_ratio(z):
    return abs(z.imag) / abs(z) if abs(z) > 0 else 0.0


def delta_eps_coulomb(grid, particle, per_mode=False):
    """Second-order ``O(eg)`` energy from one-photon intermediate states.

    Each mode contributes ``<0|H_g|k,l> (-1/omega) <k,l|H_e|0>`` and the
    total is that sum plus its complex conjugate.
    """
    q = np.asarray(particle.q, dtype=float)
    v = particle.velocity
    grid.check_resolvable(q)
    keep = []

    def part(c):
        pol = c.pol
        hg = -np.einsum("nli,ni->nl", pol, np.conj(c.current)) / np.sqrt(2.0 * c.omega)[:, None]
        he = (-particle.e * INV_2PI_32 * np.exp(-1j * (c.k @ q))[:, None]
              * (pol @ v) / np.sqrt(2.0 * c.omega)[:, None])
        s = (hg * he).sum(axis=1) * (-1.0 / c.omega)
        if per_mode:
            keep.append(s * grid.weight)
        return s.sum()

    t = complex(grid.reduce(part)) * grid.weight
    return EnergyCorrection(2.0 * t.real, "second-order-eg", "coulomb", _imag_ratio(t),
                            {"one_sided": [t.real, t.imag]},
                            np.concatenate(keep) if per_mode else None)


def _e_field_expectation_he2(grid, particle):
    """``<H_e^(2)> = -e (1/d3^2) sum_{i=1,2} d_i <E_i>(q)`` and ``max |<E_{1,2}>|``."""
    q = np.asarray(particle.q, dtype=float)

    def part(c):
        pol = c.pol
        ph = np.exp(1j * (c.k @ q))
        amp = 1j * np.sqrt(c.omega / 2.0) * INV_2PI_32
        mode = np.einsum("nl,nli->ni", c.alpha, pol) * (amp * ph)[:, None]
        efield = mode + np.conj(mode)
        # d_i / d_3^2 acting on e^{ikx} gives -i k_i / k_3^2
        op = -1j * c.k[:, :2] / (c.k[:, 2] ** 2)[:, None]
        he2 = -particle.e * (np.einsum("ni,ni->n", op, mode[:, :2])
                             + np.einsum("ni,ni->n", np.conj(op), np.conj(mode[:, :2])))
        return np.concatenate([efield.sum(axis=0), [he2.sum()]])

    tot = grid.reduce(part) * grid.weight
    return complex(tot[3]), tot[:3]


def delta_E_coherent(grid, particle, gauge="coulomb"):
    """First-order ``O(e)`` energy about the coherent ground state."""
    v = particle.velocity
    a, imag = reconstruct_A(grid, particle.q, gauge, return_imag=True)
    value = -particle.e * float(v @ a)
    scale = abs(particle.e) * float(np.linalg.norm(v) * np.linalg.norm(a))
    residual = abs(particle.e * float(v @ imag)) / scale if scale > 0 else 0.0
    details = {"A": a.tolist()}
    if gauge == "axial":
        he2, efield = _e_field_expectation_he2(grid, particle)
        value += he2.real
        details["he2_expectation"] = he2.real
        details["transverse_E_expectation"] = float(np.max(np.abs(efield[:2])))
    return EnergyCorrection(value, "first-order-e-coherent", gauge, residual, details)


def axial_second_order_terms(grid, particle):
    """``(term1, term2)``: the ``H_e^(1)`` and ``H_e^(2)`` halves of the axial ``O(eg)`` energy.

    ``term1 = sum <0|H_g|k,l> (-1/omega) <k,l|H_e^(1)|0>`` uses the axial
    polarizations in both vertices. ``term2`` uses the ``E``-field
    vertex with kernel ``k_i / (-k_3^2)``; it is purely imaginary only
    after the symmetric sum, so the lattice must be symmetric. Sources
    without current along the third axis report ``term2 = 0`` exactly.
    """
    if not grid.symmetric:
        raise GridSymmetryError("axial second-order terms need a k -> -k symmetric lattice")
    q = np.asarray(particle.q, dtype=float)
    v = particle.velocity
    grid.check_resolvable(q)

    def part(c):
        polx = _axial_pol(c)
        pol = c.pol
        root = np.sqrt(2.0 * c.omega)
        ph = np.exp(-1j * (c.k @ q)) * INV_2PI_32
        hg = -np.einsum("nli,ni->nl", polx, np.conj(c.current)) / root[:, None]
        he1 = -particle.e * (polx @ v) * (ph / root)[:, None]
        # <k,l| sum_{i<3} d_i E_i(q) / d_3^2 |0>
        div = np.sqrt(c.omega / 2.0)[:, None] * np.einsum(
            "ni,nli->nl", c.k[:, :2], pol[:, :, :2]) / (c.k[:, 2] ** 2)[:, None]
        he2 = -particle.e * div * ph[:, None]
        inv = -1.0 / c.omega[:, None]
        return np.array([(hg * inv * he1).sum(), (hg * inv * he2).sum()])

    t1, t2 = grid.reduce(part) * grid.weight
    if not np.any(grid._segs.dl[:, 2]):
        # no current along the third axis: the H_e^(2) vertex has nothing to act on
        t2 = 0.0
    return complex(t1), complex(t2)


def term2_mode_realness(grid, particle):
    """``sum |Re s_k| / sum |s_k|`` over single-mode ``H_e^(2)`` summands.

    Of order one: individual modes are not purely imaginary; only the
    symmetric total is.
    """
    q = np.asarray(particle.q, dtype=float)

    def part(c):
        s = (np.conj(c.current[:, 2]) * np.exp(-1j * (c.k @ q))
             / (2.0 * c.omega * c.k[:, 2]))
        return np.array([np.abs(s.real).sum(), np.abs(s).sum()])

    re, tot = grid.reduce(part)
    return float(re / tot) if tot > 0 else 0.0


def axial_polarization_residual(grid):
    """Max over modes of ``|e^X . J_k - e . J_k| / |J_k|``."""

    def part(c):
        cur = c.current
        diff = np.einsum("nli,ni->nl", _axial_pol(c) - c.pol, cur)
        norm = np.linalg.norm(cur, axis=1)
        ok = norm > 0
        return np.max(np.abs(diff[ok]).max(axis=1) / norm[ok]) if np.any(ok) else 0.0

    return float(max(np.asarray(part(c)) for c in grid.chunks()))
