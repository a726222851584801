"""Compiled thin-wire kernels for straight current segments.

Every kernel treats segment ``s`` as a uniform line current ``cur[s]``
running from ``a[s]`` to ``b[s]``. Heaviside-Lorentz units: the vector
potential is ``(1/4pi) * int I dl / r`` and the field is
``(1/4pi) * int I dl x r_hat / r**2``.
"""

import math

import numba as nb
import numpy as np

INV_4PI = 1.0 / (4.0 * math.pi)
INV_2PI_32 = (2.0 * math.pi) ** -1.5


@nb.njit(cache=True)
def potential(x, a, b, cur):
    """Exact segment potential: ``t_hat * 2 atanh(L / (Ra + Rb))``."""
    npt, nseg = x.shape[0], a.shape[0]
    out = np.zeros((npt, 3))
    for p in range(npt):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for s in range(nseg):
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            dz = b[s, 2] - a[s, 2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            if length == 0.0:
                continue
            ra = math.sqrt((x[p, 0] - a[s, 0]) ** 2 + (x[p, 1] - a[s, 1]) ** 2
                           + (x[p, 2] - a[s, 2]) ** 2)
            rb = math.sqrt((x[p, 0] - b[s, 0]) ** 2 + (x[p, 1] - b[s, 1]) ** 2
                           + (x[p, 2] - b[s, 2]) ** 2)
            f = 2.0 * math.atanh(length / (ra + rb)) * cur[s] / length
            s0 += f * dx
            s1 += f * dy
            s2 += f * dz
        out[p, 0] = s0 * INV_4PI
        out[p, 1] = s1 * INV_4PI
        out[p, 2] = s2 * INV_4PI
    return out


@nb.njit(cache=True)
def potential_jacobian(x, a, b, cur):
    """``out[p, i, j] = d A_i / d x_j`` of the exact segment potential."""
    npt, nseg = x.shape[0], a.shape[0]
    out = np.zeros((npt, 3, 3))
    g = np.zeros(3)
    for p in range(npt):
        for s in range(nseg):
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            dz = b[s, 2] - a[s, 2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            if length == 0.0:
                continue
            ax = x[p, 0] - a[s, 0]
            ay = x[p, 1] - a[s, 1]
            az = x[p, 2] - a[s, 2]
            bx = x[p, 0] - b[s, 0]
            by = x[p, 1] - b[s, 1]
            bz = x[p, 2] - b[s, 2]
            ra = math.sqrt(ax * ax + ay * ay + az * az)
            rb = math.sqrt(bx * bx + by * by + bz * bz)
            ssum = ra + rb
            c = -2.0 * length / ((ssum - length) * (ssum + length)) * cur[s] / length
            g[0] = c * (ax / ra + bx / rb)
            g[1] = c * (ay / ra + by / rb)
            g[2] = c * (az / ra + bz / rb)
            for j in range(3):
                out[p, 0, j] += dx * g[j]
                out[p, 1, j] += dy * g[j]
                out[p, 2, j] += dz * g[j]
    return out * INV_4PI


@nb.njit(cache=True)
def bfield(x, a, b, cur):
    """Finite-segment Biot-Savart field (cosine-difference form)."""
    npt, nseg = x.shape[0], a.shape[0]
    out = np.zeros((npt, 3))
    for p in range(npt):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for s in range(nseg):
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            dz = b[s, 2] - a[s, 2]
            ax = x[p, 0] - a[s, 0]
            ay = x[p, 1] - a[s, 1]
            az = x[p, 2] - a[s, 2]
            bx = x[p, 0] - b[s, 0]
            by = x[p, 1] - b[s, 1]
            bz = x[p, 2] - b[s, 2]
            cx = ay * dz - az * dy
            cy = az * dx - ax * dz
            cz = ax * dy - ay * dx
            c2 = cx * cx + cy * cy + cz * cz
            if c2 == 0.0:
                continue
            ra = math.sqrt(ax * ax + ay * ay + az * az)
            rb = math.sqrt(bx * bx + by * by + bz * bz)
            sine = (dx * bx + dy * by + dz * bz) / rb - (dx * ax + dy * ay + dz * az) / ra
            f = cur[s] * sine / c2
            s0 += f * cx
            s1 += f * cy
            s2 += f * cz
        out[p, 0] = s0 * INV_4PI
        out[p, 1] = s1 * INV_4PI
        out[p, 2] = s2 * INV_4PI
    return out


@nb.njit(cache=True)
def fourier(k, a, b, cur):
    """``(2pi)^-3/2 * sum I dl exp(-i k.m) sinc(k.dl / 2)``.

    This is the exact transform of a straight segment, so a closed chain
    gives ``k . J_k = 0`` up to rounding.
    """
    nk, nseg = k.shape[0], a.shape[0]
    out = np.zeros((nk, 3), dtype=np.complex128)
    for q in range(nk):
        k0 = k[q, 0]
        k1 = k[q, 1]
        k2 = k[q, 2]
        re0 = 0.0
        re1 = 0.0
        re2 = 0.0
        im0 = 0.0
        im1 = 0.0
        im2 = 0.0
        for s in range(nseg):
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            dz = b[s, 2] - a[s, 2]
            phase = k0 * (a[s, 0] + 0.5 * dx) + k1 * (a[s, 1] + 0.5 * dy) + k2 * (a[s, 2] + 0.5 * dz)
            half = 0.5 * (k0 * dx + k1 * dy + k2 * dz)
            if abs(half) > 1e-4:
                sinc = math.sin(half) / half
            else:
                h2 = half * half
                sinc = 1.0 - h2 / 6.0 + h2 * h2 / 120.0
            w = cur[s] * sinc
            c = math.cos(phase) * w
            sn = -math.sin(phase) * w
            re0 += c * dx
            re1 += c * dy
            re2 += c * dz
            im0 += sn * dx
            im1 += sn * dy
            im2 += sn * dz
        out[q, 0] = complex(re0, im0) * INV_2PI_32
        out[q, 1] = complex(re1, im1) * INV_2PI_32
        out[q, 2] = complex(re2, im2) * INV_2PI_32
    return out


@nb.njit(cache=True)
def wire_clearance(x, a, b):
    """Smallest ``distance / (0.5 * segment length)`` over all segments."""
    npt, nseg = x.shape[0], a.shape[0]
    out = np.full(npt, np.inf)
    for p in range(npt):
        best = np.inf
        for s in range(nseg):
            dx = b[s, 0] - a[s, 0]
            dy = b[s, 1] - a[s, 1]
            dz = b[s, 2] - a[s, 2]
            l2 = dx * dx + dy * dy + dz * dz
            if l2 == 0.0:
                continue
            ax = x[p, 0] - a[s, 0]
            ay = x[p, 1] - a[s, 1]
            az = x[p, 2] - a[s, 2]
            t = (ax * dx + ay * dy + az * dz) / l2
            t = min(1.0, max(0.0, t))
            ex = ax - t * dx
            ey = ay - t * dy
            ez = az - t * dz
            r = math.sqrt(ex * ex + ey * ey + ez * ez) / (0.5 * math.sqrt(l2))
            if r < best:
                best = r
        out[p] = best
    return out


@nb.njit(cache=True)
def axis_phases(kvals, coords):
    """``out[i, s] = exp(-i kvals[i] coords[s])``."""
    out = np.empty((kvals.shape[0], coords.shape[0]), dtype=np.complex128)
    for i in range(kvals.shape[0]):
        for s in range(coords.shape[0]):
            t = kvals[i] * coords[s]
            out[i, s] = complex(math.cos(t), -math.sin(t))
    return out


@nb.njit(cache=True)
def fourier_slab(k1, k2, k3, i3, ta, tb, tm, a, b, cur):
    """Segment transform on the plane ``k_3 = k3`` of a tensor-product lattice.

    ``ta``, ``tb``, ``tm`` hold per-axis phase tables (axis, k index,
    segment) for segment starts, ends and midpoints, so the transform
    ``I dl (e^{-ik.a} - e^{-ik.b}) / (i k.dl)`` needs no trigonometry.
    Rows are ordered with ``k1`` slowest.
    """
    n1, n2, nseg = k1.shape[0], k2.shape[0], a.shape[0]
    out = np.zeros((n1 * n2, 3), dtype=np.complex128)
    for i1 in range(n1):
        for i2 in range(n2):
            acc0 = 0j
            acc1 = 0j
            acc2 = 0j
            for s in range(nseg):
                dx = b[s, 0] - a[s, 0]
                dy = b[s, 1] - a[s, 1]
                dz = b[s, 2] - a[s, 2]
                kd = k1[i1] * dx + k2[i2] * dy + k3 * dz
                if abs(kd) > 1e-2:
                    ea = ta[0, i1, s] * ta[1, i2, s] * ta[2, i3, s]
                    eb = tb[0, i1, s] * tb[1, i2, s] * tb[2, i3, s]
                    w = (ea - eb) * complex(0.0, -1.0 / kd)
                else:
                    h2 = 0.25 * kd * kd
                    em = tm[0, i1, s] * tm[1, i2, s] * tm[2, i3, s]
                    w = em * (1.0 - h2 / 6.0 + h2 * h2 / 120.0)
                w = w * cur[s]
                acc0 += w * dx
                acc1 += w * dy
                acc2 += w * dz
            row = i1 * n2 + i2
            out[row, 0] = acc0 * INV_2PI_32
            out[row, 1] = acc1 * INV_2PI_32
            out[row, 2] = acc2 * INV_2PI_32
    return out
