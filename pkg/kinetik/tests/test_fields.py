import math

import numpy as np
import pytest

from kinetik.errors import ValidationError
from kinetik.fields import (
    AlgebraicDecay,
    DensityField,
    Maxwellian,
    PhaseField,
    PhaseGrid,
    SampledField,
    SmoothBump,
    VelocityGrid,
    ZeroField,
    check_periodization,
    fractional_laplacian,
    hs_seminorm,
    l2_norm,
    sample,
    spectral_gradient,
)


def _mode(grid, m=2, kind=np.cos):
    xi0 = 2.0 * math.pi * m / (2.0 * grid.L)
    return xi0, SampledField(grid, kind(xi0 * grid.points[..., 0]))


def test_grid_validation():
    """Test grid preconditions"""
    with pytest.raises(ValidationError, match="2 or 3"):
        VelocityGrid(1, 16, 1.0)
    with pytest.raises(ValidationError, match="at least 8"):
        VelocityGrid(2, 4, 1.0)
    with pytest.raises(ValidationError, match="positive"):
        VelocityGrid(2, 16, 0.0)


def test_grid_lattice():
    """Test that the lattice is [-L, L) with spacing 2L/N"""
    grid = VelocityGrid(2, 16, 4.0)
    assert grid.h == 0.5
    assert grid.axis[0] == -4.0
    assert grid.axis[-1] == 3.5
    assert grid.points.shape == (16, 16, 2)
    assert grid.cell == 0.25


def test_maxwellian_peak():
    """Test the unit Maxwellian density at the origin"""
    grid = VelocityGrid(2, 32, 6.0)
    f = sample(Maxwellian(), grid)
    assert f.values[16, 16] == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-14)
    assert np.sum(f.values) * grid.cell == pytest.approx(1.0, rel=1e-6)


def test_density_rejects_negative_samples():
    """Test that densities must be nonnegative"""
    grid = VelocityGrid(2, 8, 1.0)
    values = np.zeros(grid.shape)
    values[0, 0] = -1e-3
    with pytest.raises(ValidationError, match="nonnegative"):
        DensityField(grid, values)


def test_evaluate_reproduces_nodes():
    """Test that interpolation is exact at grid nodes"""
    grid = VelocityGrid(2, 16, 3.0)
    f = sample(SmoothBump(width=2.0), grid)
    np.testing.assert_allclose(f.evaluate(grid.points, order=1), f.values, atol=1e-14)


def test_evaluate_uses_tail_outside_box():
    """Test that the algebraic tail model is used beyond [-L, L]^d"""
    grid = VelocityGrid(2, 32, 4.0)
    f = DensityField(grid, np.ones(grid.shape), tail_c=2.0, tail_q=5.0)
    v = np.array([[10.0, 0.0]])
    assert f.evaluate(v)[0] == pytest.approx(2.0 * 11.0**-5.0)


def test_tail_fit_recovers_algebraic_decay():
    """Test the least-squares tail fit on an exact power law"""
    grid = VelocityGrid(2, 64, 8.0)
    f = sample(AlgebraicDecay(3.0, 6.0), grid)
    assert f.tail_q == pytest.approx(6.0, rel=1e-8)
    assert f.tail_c == pytest.approx(3.0, rel=1e-8)


def test_zero_field_is_zero():
    """Test that the sampled zero field has no tail and reports is_zero"""
    f = sample(ZeroField(), VelocityGrid(2, 8, 1.0))
    assert f.is_zero
    assert not f.has_tail


def test_scaled_and_with_values():
    """Test scaling multiplies samples and tail, with_values keeps the tail"""
    grid = VelocityGrid(2, 16, 4.0)
    f = DensityField(grid, np.ones(grid.shape), 1.0, 4.0)
    g = f.scaled(2.0)
    assert np.all(g.values == 2.0)
    assert g.tail_c == 2.0
    with pytest.raises(ValidationError):
        f.scaled(-1.0)
    h = f.with_values(np.zeros(grid.shape))
    assert h.tail_q == 4.0


def test_hs_seminorm_of_fourier_mode():
    """Test |f|_Hs = xi0^s |f|_L2 for a single lattice mode"""
    grid = VelocityGrid(2, 32, math.pi)
    xi0, f = _mode(grid)
    for s in (0.25, 0.5, 1.0):
        assert hs_seminorm(f, s) == pytest.approx(xi0**s * l2_norm(f), rel=1e-10)


def test_fractional_laplacian_of_fourier_mode():
    """Test that a lattice mode is an eigenfunction with eigenvalue xi0^2s"""
    grid = VelocityGrid(2, 32, math.pi)
    xi0, f = _mode(grid, m=3)
    np.testing.assert_allclose(fractional_laplacian(f, 0.3), xi0**0.6 * f.values, atol=1e-10)
    with pytest.raises(ValidationError):
        fractional_laplacian(f, 0.0)


def test_spectral_gradient_of_sine():
    """Test d/dv1 sin(xi0 v1) = xi0 cos(xi0 v1)"""
    grid = VelocityGrid(2, 32, math.pi)
    xi0, f = _mode(grid, kind=np.sin)
    grad = spectral_gradient(f)
    np.testing.assert_allclose(grad[..., 0], xi0 * np.cos(xi0 * grid.points[..., 0]), atol=1e-10)
    np.testing.assert_allclose(grad[..., 1], 0.0, atol=1e-10)


def test_periodization_check():
    """Test that wide fields breach the periodization floor"""
    grid = VelocityGrid(2, 32, 2.0)
    assert not check_periodization(sample(Maxwellian(), grid))
    assert check_periodization(sample(SmoothBump(width=1.0), grid))


def test_phase_field_interpolates_nodes():
    """Test that the periodic spline reproduces samples at grid nodes"""
    grid = PhaseGrid(2, 8, math.pi, 8, 2.0)
    rng = np.random.default_rng(0)
    f = PhaseField(grid, rng.uniform(size=grid.shape))
    mesh = grid.mesh()
    x = np.stack(mesh[:2], axis=-1)
    v = np.stack(mesh[2:], axis=-1)
    np.testing.assert_allclose(f.evaluate(x, v), f.values, atol=1e-10)
    assert f.mass() == pytest.approx(np.sum(f.values) * grid.cell)


def test_phase_field_shape_check():
    """Test that samples must match the phase grid"""
    grid = PhaseGrid(2, 4, 1.0, 8, 1.0)
    with pytest.raises(ValidationError, match="grid expects"):
        PhaseField(grid, np.zeros((4, 4, 8)))
