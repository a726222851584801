import numpy as np
import pytest
from hypothesis import given, strategies as st

from abgauge.boyer import MovingChargeField, boyer_energy, hg_cancellation, hg_term
from abgauge.gauges import coulomb_A, curl_fd
from abgauge.modes import ModeGrid, delta_eps_coulomb
from abgauge.paths import ParticleState
from abgauge.sources import CircularLoop

Q = (-0.5, 0.15, 0.3)
PARTICLE = ParticleState(1.0, 1.0, (0.4, 1.0, 0.3), Q)


def test_field_geometry(rng):
    field = MovingChargeField(ParticleState(0.8, 2.0, (0.3, -1.0, 0.5), (0.1, 0.2, 0.3)))
    x = rng.normal(size=(20, 3)) * 2
    rel = x - np.array([0.1, 0.2, 0.3])
    b = field(x)
    assert np.abs(np.einsum("ij,ij->i", b, rel)).max() < 1e-14 * np.abs(b).max()
    # the field is the curl of the charge's own potential
    assert np.allclose(curl_fd(field.potential, x, 1e-4), b, rtol=1e-7, atol=1e-10)
    # inverse-square falloff along a ray
    d = np.array([0.3, 0.8, -0.5])
    r = np.array([2.0, 4.0, 8.0])
    mags = np.linalg.norm(field(np.array([0.1, 0.2, 0.3]) + np.outer(r, d)), axis=1)
    assert np.allclose(mags * r ** 2, mags[0] * r[0] ** 2, rtol=1e-12)
    with pytest.raises(ValueError):
        field([0.1, 0.2, 0.3])


def test_zero_momentum(small_grid, loop_x):
    still = ParticleState(1.0, 1.0, (0, 0, 0), Q)
    assert hg_cancellation(still, loop_x, small_grid) == (0.0, 0.0, 0.0)


def test_sign_against_second_order_energy(grid48, loop_x):
    boyer = boyer_energy(PARTICLE, loop_x, grid48)
    eps = delta_eps_coulomb(grid48, PARTICLE).value
    real_space = PARTICLE.e * PARTICLE.velocity @ coulomb_A(loop_x, Q, 3)
    assert abs(boyer + eps) < 1e-2 * abs(eps)
    assert abs(boyer - real_space) < 1e-2 * abs(real_space)
    assert np.sign(boyer) == np.sign(real_space) == -np.sign(eps)


def test_cancellation(small_grid, loop_x):
    boyer, hg, residual = hg_cancellation(PARTICLE, loop_x, small_grid)
    assert abs(residual) < 1e-10 * abs(boyer)
    assert hg == hg_term(PARTICLE, loop_x, small_grid)


@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(-3, 3))
def test_linear_in_charge_strength_and_momentum(e, g, scale):
    loop = CircularLoop(0.5, normal=(1, 0, 0), g=g)
    grid = _grid(g)
    base = boyer_energy(PARTICLE, loop.with_strength(1.0), _grid(1.0))
    moved = ParticleState(e, 1.0, tuple(scale * np.array(PARTICLE.p)), Q)
    assert boyer_energy(moved, loop, grid) == pytest.approx(e * g * scale * base, rel=1e-12, abs=1e-300)


_GRIDS = {}


def _grid(g):
    if g not in _GRIDS:
        loop = CircularLoop(0.5, normal=(1, 0, 0), g=g)
        _GRIDS[g] = ModeGrid(np.pi / 4, 6, loop, 1)
    return _GRIDS[g]


def test_grid_must_match_source(small_grid):
    with pytest.raises(ValueError):
        boyer_energy(PARTICLE, CircularLoop(0.7), small_grid)
