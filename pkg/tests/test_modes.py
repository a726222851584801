import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abgauge.gauges import axial_A, coulomb_A
from abgauge.modes import (GridSymmetryError, ModeGrid, ResolutionWarning,
                           axial_polarization_residual, axial_second_order_terms,
                           completeness_residual, default_spacing, delta_E_coherent,
                           delta_eps_coulomb, polarization_basis, reconstruct_A,
                           term2_mode_realness)
from abgauge.paths import ParticleState
from abgauge.sources import CircularLoop, FiniteSolenoid

INV_2PI_32 = (2 * math.pi) ** -1.5
Q = (-0.5, 0.15, 0.3)
PARTICLE = ParticleState(1.0, 1.0, (0.4, 1.0, 0.3), Q)

vec = st.tuples(*[st.floats(-10, 10, allow_subnormal=False)] * 3).filter(
    lambda k: np.linalg.norm(k) > 1e-3)


@given(vec)
def test_polarization_triad(k):
    k = np.array([k])
    e1, e2 = polarization_basis(k)
    khat = k / np.linalg.norm(k)
    assert completeness_residual(k).max() < 1e-12
    assert abs(np.linalg.det(np.stack([e1[0], e2[0], khat[0]])) - 1) < 1e-12
    assert max(abs(e1[0] @ khat[0]), abs(e2[0] @ khat[0])) < 1e-12


def test_polarization_along_third_axis():
    k = np.array([[0, 0, 1.0], [0, 0, -2.0], [1e-12, 0, 1.0]])
    e1, e2 = polarization_basis(k)
    assert np.allclose(e1[0], [1, 0, 0])
    assert completeness_residual(k).max() < 1e-12


def test_completeness_for_1000_random_modes(rng):
    k = rng.normal(size=(1000, 3)) * rng.uniform(0.1, 10, size=(1000, 1))
    assert completeness_residual(k).max() < 1e-12


def test_grid_layout(small_grid):
    ax = small_grid.axis_values()
    assert len(ax) == 32 and np.all(ax != 0)
    assert np.allclose(ax, -ax[::-1], rtol=0, atol=1e-15)
    ks = np.concatenate([c.k for c in small_grid.chunks()])
    assert len(ks) == small_grid.size
    assert np.all(ks[:, 2] != 0) and np.all(np.linalg.norm(ks, axis=1) > 0)
    # set symmetric under k -> -k
    keys = {tuple(np.round(k / small_grid.spacing * 2).astype(int)) for k in ks}
    assert keys == {tuple(-np.array(k)) for k in keys}
    assert small_grid.weight == small_grid.spacing ** 3


@pytest.mark.parametrize("kwargs", [dict(spacing=0.0), dict(extent=1), dict(extent=2.5),
                                    dict(offset=0.0), dict(offset=1.0)])
def test_grid_validation(kwargs, loop_x):
    args = dict(spacing=0.5, extent=4, source=loop_x)
    args.update(kwargs)
    with pytest.raises(ValueError):
        ModeGrid(**args)


def test_zero_source_has_zero_amplitudes(loop_x):
    grid = ModeGrid(0.5, 4, loop_x.with_strength(0.0), 1)
    assert all(np.all(c.alpha == 0) for c in grid.chunks())
    assert np.all(reconstruct_A(grid, [0.3, 0.2, 0.1]) == 0)


def test_reconstruction_is_real(small_grid):
    x = np.array([[0.5, 0.5, 0.5], [-0.3, 0.6, 0.2]])
    val, imag = reconstruct_A(small_grid, x, return_imag=True)
    assert np.abs(imag).max() < 1e-10 * np.abs(val).max()


def test_reconstruction_is_linear_in_strength(loop_x, small_grid):
    double = ModeGrid(small_grid.spacing, small_grid.extent, loop_x.with_strength(2.0), 2)
    x = [0.5, 0.5, 0.5]
    a, b = reconstruct_A(double, x), reconstruct_A(small_grid, x)
    assert np.allclose(a, 2 * b, rtol=1e-14, atol=0)


def test_cached_and_streamed_grids_agree(loop_x, small_grid):
    streamed = ModeGrid(small_grid.spacing, small_grid.extent, loop_x, 2, cache_limit=0)
    x = [0.4, -0.3, 0.2]
    assert np.array_equal(reconstruct_A(streamed, x), reconstruct_A(small_grid, x))


def test_zero_momentum_gives_zero(small_grid):
    still = ParticleState(1.0, 1.0, (0, 0, 0), Q)
    assert delta_eps_coulomb(small_grid, still).value == 0.0
    assert delta_E_coherent(small_grid, still, "axial").value == 0.0


def test_momentum_perpendicular_to_potential(grid48, loop_x):
    a = coulomb_A(loop_x, Q, 3)
    p = np.cross(a, [0.3, -0.5, 1.0])
    p /= np.linalg.norm(p)
    eps = delta_eps_coulomb(grid48, ParticleState(1.0, 1.0, p, Q)).value
    assert abs(eps) < 1e-3 * np.linalg.norm(a)


def test_second_order_equals_coherent(small_grid):
    eps = delta_eps_coulomb(small_grid, PARTICLE)
    coh = delta_E_coherent(small_grid, PARTICLE, "coulomb")
    ref = -PARTICLE.e * PARTICLE.velocity @ reconstruct_A(small_grid, Q)
    assert abs(eps.value - coh.value) < 1e-12 * abs(coh.value)
    assert abs(eps.value - ref) < 1e-12 * abs(ref)
    assert eps.imag_residual < 1e-12 and coh.imag_residual < 1e-12


def test_identity_holds_mode_by_mode(small_grid):
    # each second-order summand is the complex conjugate of the coherent summand
    eps = delta_eps_coulomb(small_grid, PARTICLE, per_mode=True)
    q, v = np.asarray(Q), PARTICLE.velocity
    parts = []
    for c in small_grid.chunks():
        field = np.einsum("nl,nli->ni", c.alpha, c.pol) * (INV_2PI_32 / np.sqrt(2 * c.omega))[:, None]
        parts.append(-PARTICLE.e * (field @ v) * np.exp(1j * (c.k @ q)) * small_grid.weight)
    coherent = np.concatenate(parts)
    scale = np.abs(coherent).max()
    assert np.abs(eps.per_mode - np.conj(coherent)).max() < 1e-13 * scale


def test_axial_energy_matches_real_space(grid48, loop_x):
    axial = delta_E_coherent(grid48, PARTICLE, "axial")
    ref = -PARTICLE.e * PARTICLE.velocity @ axial_A(loop_x, Q, 3)
    assert abs(axial.value - ref) < 2e-2 * abs(ref)
    assert abs(axial.details["he2_expectation"]) < 1e-12 * abs(axial.value)
    assert axial.details["transverse_E_expectation"] < 1e-12


def test_axial_terms_on_loop(small_grid):
    t1, t2 = axial_second_order_terms(small_grid, PARTICLE)
    axial = delta_E_coherent(small_grid, PARTICLE, "axial")
    assert abs(2 * t1.real - axial.value) < 1e-12 * abs(axial.value)
    assert abs(t2.real) < 1e-10 * abs(t2.imag)
    # individual modes are far from imaginary; only the symmetric sum is
    assert term2_mode_realness(small_grid, PARTICLE) > 0.1


def test_axis_aligned_solenoid_energies():
    sol = FiniteSolenoid(0.5, 1.0, 3.0, winding="rings")
    grid = ModeGrid(default_spacing(sol), 12, sol, 0)
    t1, t2 = axial_second_order_terms(grid, PARTICLE)
    coulomb = delta_E_coherent(grid, PARTICLE, "coulomb").value
    assert t2 == 0
    assert abs(2 * t1.real - coulomb) < 1e-12 * abs(coulomb)
    assert abs(delta_E_coherent(grid, PARTICLE, "axial").value - coulomb) < 1e-12 * abs(coulomb)


def test_asymmetric_grid_rejected(loop_x):
    grid = ModeGrid(0.5, 4, loop_x, 1, offset=0.25)
    with pytest.raises(GridSymmetryError):
        axial_second_order_terms(grid, PARTICLE)


def test_axial_polarization_replacement(small_grid):
    assert axial_polarization_residual(small_grid) < 1e-10


def test_resolution_warning(small_grid):
    with pytest.warns(ResolutionWarning):
        reconstruct_A(small_grid, [3.0, 0.0, 0.0])


def test_mode_export(tmp_path, loop_x):
    grid = ModeGrid(0.5, 3, loop_x, 0)
    out = tmp_path / "modes.csv"
    assert grid.export_modes(out) == grid.size
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k1", "k2", "k3", "omega", "alpha1_re", "alpha1_im", "alpha2_re", "alpha2_im"]
    assert len(rows) == grid.size + 1
    assert grid.export_modes(out, limit=5) == 5


def test_energy_depends_on_gauge(grid48):
    coulomb = delta_E_coherent(grid48, PARTICLE, "coulomb").value
    axial = delta_E_coherent(grid48, PARTICLE, "axial").value
    combined = 2e-2 * (abs(coulomb) + abs(axial))
    assert abs(axial - coulomb) > 10 * combined
