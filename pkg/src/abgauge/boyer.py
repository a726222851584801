"""Field energy of a charge moving past a static current, and its cancellation.

The moving charge carries the magnetic field
``B~(x) = -(p/m) x grad(e / (4 pi |x - q|))``. Its overlap with the
source field, ``int B~ . B_ext``, is evaluated by Parseval on a mode grid,
where both factors have closed-form transforms:

    B_ext,k = i k x J_k / k^2
    B~_k    = -i e (2pi)^{-3/2} (v x k) e^{-i k.q} / k^2

The coupling ``<H_g>`` is evaluated on the same grid from the transverse
part of the charge's own vector potential ``e v / (4 pi |x - q|)``.
"""

import numpy as np

from .gauges import as_points, _unpack
from .modes import INV_2PI_32


class MovingChargeField:
    """Low-velocity magnetic field of a point charge."""

    def __init__(self, particle):
        self.particle = particle

    def potential(self, x):
        """``e v / (4 pi |x - q|)``; its curl is the field."""
        pts, single = as_points(x)
        r = np.linalg.norm(pts - np.asarray(self.particle.q), axis=1)
        out = self.particle.e * np.outer(1.0 / (4 * np.pi * r), self.particle.velocity)
        return _unpack(out, single)

    def __call__(self, x):
        pts, single = as_points(x)
        rel = pts - np.asarray(self.particle.q)
        r = np.linalg.norm(rel, axis=1)
        if np.any(r == 0):
            raise ValueError("field of a point charge is undefined at the charge")
        # grad(1/r) = -rel / r^3
        grad = -rel / r[:, None] ** 3
        out = -self.particle.e / (4 * np.pi) * np.cross(self.particle.velocity, grad)
        return _unpack(out, single)


def _check(particle, source, grid):
    if grid.source != source:
        raise ValueError("mode grid was built for a different source")
    grid.check_resolvable(np.asarray(particle.q))


def boyer_energy(particle, source, grid):
    """``int B~ . B_ext d^3x`` by Parseval on the mode grid."""
    _check(particle, source, grid)
    q = np.asarray(particle.q, dtype=float)
    v = particle.velocity
    e = particle.e

    def part(c):
        k2 = c.omega ** 2
        bext = 1j * np.cross(c.k, c.current) / k2[:, None]
        bq = (-1j * e * INV_2PI_32) * np.cross(v, c.k) * (np.exp(-1j * (c.k @ q)) / k2)[:, None]
        return np.sum(np.einsum("ni,ni->n", np.conj(bq), bext).real)

    return float(grid.reduce(part) * grid.weight)


def hg_term(particle, source, grid):
    """``<H_g> = -int J . A_perp``, with ``A_perp`` the charge's transverse potential."""
    _check(particle, source, grid)
    q = np.asarray(particle.q, dtype=float)
    v = particle.velocity
    e = particle.e

    def part(c):
        k2 = c.omega ** 2
        khat = c.k / c.omega[:, None]
        vperp = v - khat * (khat @ v)[:, None]
        apart = (e * INV_2PI_32) * vperp * (np.exp(-1j * (c.k @ q)) / k2)[:, None]
        return -np.sum(np.einsum("ni,ni->n", np.conj(c.current), apart).real)

    return float(grid.reduce(part) * grid.weight)


def hg_cancellation(particle, source, grid):
    """``(boyer, hg_term, boyer + hg_term)``."""
    boyer = boyer_energy(particle, source, grid)
    hg = hg_term(particle, source, grid)
    return boyer, hg, boyer + hg
