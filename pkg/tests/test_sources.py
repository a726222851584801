import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abgauge.sources import (CircularLoop, ClosedFormOnlyError, CurrentSegmentSet,
                             FiniteSolenoid, IdealSolenoid, PolylineLoop, discretize,
                             divergence_residual, fourier_current, open_helix,
                             probe_wavevectors, source_from_dict, source_to_dict)

INV_2PI_32 = (2 * math.pi) ** -1.5


def _circle_ft(loop, k, n=4096):
    """Continuous loop transform by the periodic trapezoid rule (spectrally accurate)."""
    from abgauge.sources import orthonormal_frame

    u, v, _ = orthonormal_frame(loop.normal)
    phi = 2 * math.pi * np.arange(n) / n
    pts = np.asarray(loop.center) + loop.radius * (np.outer(np.cos(phi), u) + np.outer(np.sin(phi), v))
    tangent = loop.radius * (np.outer(-np.sin(phi), u) + np.outer(np.cos(phi), v))
    phase = np.exp(-1j * (pts @ np.asarray(k)))
    return INV_2PI_32 * loop.g * loop.current * (tangent * phase[:, None]).sum(axis=0) * (2 * math.pi / n)


def test_loop_level3_has_360_closed_segments():
    segs = discretize(CircularLoop(1.0), 3)
    assert len(segs) == 360
    assert np.linalg.norm(segs.closure_vectors()) < 1e-12
    assert segs.chain_gaps().max() < 1e-12


def test_square_polyline_geometry():
    sq = PolylineLoop([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)])
    segs = discretize(sq, 0)
    assert len(segs) == 4
    assert segs.total_length == pytest.approx(4.0, abs=1e-15)


@pytest.mark.parametrize("winding", ["helix", "rings"])
def test_solenoid_chain_closes(winding):
    sol = FiniteSolenoid(0.5, 2.0, 12.5, winding=winding)
    assert sol.turns == 50
    segs = discretize(sol, 0)
    assert segs.chain_gaps().max() < 1e-12
    assert np.abs(segs.closure_vectors()).max() < 1e-12


def test_rings_have_no_axial_current():
    segs = discretize(FiniteSolenoid(0.5, 2.0, 5.0, winding="rings"), 0)
    assert np.abs(segs.dl[:, 2]).max() < 1e-15


def test_refinement_doubles_segments():
    loop = CircularLoop(0.7)
    counts = [len(discretize(loop, n)) for n in range(4)]
    assert all(b >= 2 * a for a, b in zip(counts, counts[1:]))


def test_arc_length_converges_to_circumference():
    loop = CircularLoop(1.0)
    errs = [abs(discretize(loop, n).total_length - 2 * math.pi) for n in range(5)]
    assert errs[-1] < 1e-4 and all(b < a for a, b in zip(errs, errs[1:]))


def test_ideal_solenoid_cannot_be_discretized():
    with pytest.raises(ClosedFormOnlyError):
        discretize(IdealSolenoid(0.5, 2.0))


def test_zero_strength_gives_zero_transform():
    k = probe_wavevectors(1.0)
    assert np.all(fourier_current(CircularLoop(1.0, g=0.0), k) == 0)


def test_transform_matches_continuous_loop():
    loop = CircularLoop(0.5, center=(0.1, -0.2, 0.3), normal=(1, 1, 0))
    k = np.array([1.3, -0.4, 2.2])
    ref = _circle_ft(loop, k)
    errs = [np.linalg.norm(fourier_current(loop, k, n) - ref) / np.linalg.norm(ref) for n in (1, 3, 5)]
    # polygon-vs-circle error falls like the squared segment length
    assert errs[1] < 2e-4 and errs[2] < errs[1] / 10


def test_small_k_limit_along_normal():
    # along the normal the phase is constant on the loop: J_k -> 0 for the closed chain,
    # and the leading term is of first order in k
    loop = CircularLoop(0.5, normal=(0, 0, 1))
    for kz in (1e-3, 1e-2):
        jk = fourier_current(loop, [0.0, 0.0, kz], 3)
        assert np.linalg.norm(jk) < 1e-13
    kx = 1e-3
    jk = fourier_current(loop, [kx, 0.0, 0.0], 3)
    ref = _circle_ft(loop, [kx, 0.0, 0.0])
    assert np.linalg.norm(jk - ref) < 1e-3 * np.linalg.norm(ref)


def test_divergence_residual_square_loop():
    sq = PolylineLoop([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)])
    assert divergence_residual(sq, 0) < 1e-10


def test_divergence_residual_loop_fine():
    assert divergence_residual(CircularLoop(0.5), 8) < 1e-8


def test_open_helix_is_flagged():
    helix = open_helix(FiniteSolenoid(0.5, 2.0, 5.0), 0)
    assert not helix.closed
    assert divergence_residual(helix, wavevectors=probe_wavevectors(2.5)) > 0.1


@given(st.floats(-5, 5), st.floats(0.1, 3), st.integers(0, 3))
def test_transform_is_linear_in_strength(g, radius, level):
    base = CircularLoop(radius, normal=(0.3, -0.2, 1.0))
    k = probe_wavevectors(radius, 6)
    a = fourier_current(base.with_strength(g), k, level)
    b = g * fourier_current(base, k, level)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-300)


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
                min_size=3, max_size=8, unique=True), st.integers(0, 3))
def test_polyline_chains_close(verts, level):
    v = np.asarray(verts)
    if np.min(np.linalg.norm(v - np.roll(v, -1, axis=0), axis=1)) < 1e-3:
        return
    segs = discretize(PolylineLoop(verts), level)
    scale = 1 + np.abs(v).max()
    assert np.abs(segs.closure_vectors()).max() < 1e-12 * scale * len(segs)
    k = probe_wavevectors(1.0, 5)
    kj = np.abs(np.einsum("ij,ij->i", k, fourier_current(segs, k)))
    assert kj.max() < 1e-12 * scale * len(segs)


def test_dict_round_trip():
    for src in (CircularLoop(0.5, normal=(1, 0, 0), g=2.0),
                FiniteSolenoid(0.5, 2.0, 5.0, axis=(1, 0, 0), winding="rings"),
                PolylineLoop([(0, 0, 0), (1, 0, 0), (0, 1, 0)]),
                IdealSolenoid(0.5, 2.0)):
        assert source_from_dict(source_to_dict(src)) == src


@pytest.mark.parametrize("spec", [{"kind": "torus"}, {"kind": "loop", "radius": -1},
                                  {"kind": "loop", "radius": 1, "colour": 3},
                                  {"kind": "solenoid", "radius": 1, "half_length": 1,
                                   "turns_per_length": 5, "winding": "zigzag"}])
def test_bad_source_specs(spec):
    with pytest.raises(ValueError):
        source_from_dict(spec)


def test_segment_set_is_read_only():
    segs = discretize(CircularLoop(1.0), 0)
    assert isinstance(segs, CurrentSegmentSet)
    with pytest.raises(ValueError):
        segs.start[0, 0] = 1.0
