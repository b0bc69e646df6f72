import math

import numpy as np
import pytest

from kinetik.ellipticity import (
    avg_upper_bound,
    cancellation_residuals,
    coercivity_check,
    cone_estimate,
    directional_lower_bound,
    ellipticity_report,
    hs_bilinear_check,
    kernel_coefficient_modulus,
    nondivergence_residual,
)
from kinetik.errors import BudgetExceededError, ValidationError
from kinetik.fields import SampledField, VelocityGrid
from kinetik.geometry import KineticPoint
from kinetik.kernels import (
    ConeKernel,
    KernelFunction,
    PowerKernel,
    SkewedKernel,
    ZeroKernel,
    fractional_laplacian_constant,
)


def test_avg_upper_bound_of_power_kernel():
    """Test Lambda = |S^(d-1)| / (2 - 2s) for |w|^(-d-2s) at every radius"""
    for d, s in ((2, 0.25), (3, 0.6)):
        K = PowerKernel(d, s)
        expected = (2.0 * math.pi if d == 2 else 4.0 * math.pi) / (2.0 - 2.0 * s)
        assert avg_upper_bound(K, np.zeros(d), [0.5, 1.0, 2.0]) == pytest.approx(expected, rel=1e-10)
    with pytest.raises(ValidationError, match="positive radii"):
        avg_upper_bound(PowerKernel(2, 0.5), [0.0, 0.0], [])


def test_cone_of_power_kernel_is_the_sphere():
    """Test lambda = 1 and mu = |S^(d-1)| for the isotropic kernel"""
    lam, cone, mu = cone_estimate(PowerKernel(2, 0.3), [0.0, 0.0])
    assert lam == pytest.approx(1.0)
    assert mu == pytest.approx(2.0 * math.pi)
    assert len(cone) == 32


def test_cone_of_cone_kernel():
    """Test that the double cap is recovered with its measure"""
    K = ConeKernel(2, 0.5, (1.0, 0.0), math.pi / 8)
    estimate = cone_estimate(K, [0.0, 0.0])
    assert estimate.lambda_hat == pytest.approx(1.0)
    assert estimate.measure == pytest.approx(math.pi / 2.0)
    cone = estimate.cone
    assert np.all(np.abs(cone[:, 0]) >= math.cos(math.pi / 8))
    with pytest.raises(ValidationError, match="threshold rule"):
        cone_estimate(K, [0.0, 0.0], rule="mean")


def test_cone_of_zero_kernel_is_empty():
    """Test that K = 0 has no cone"""
    lam, cone, mu = cone_estimate(ZeroKernel(2, 0.5), [0.0, 0.0])
    assert lam == 0.0
    assert mu == 0.0
    assert len(cone) == 0


def test_cancellation_residuals_of_symmetric_kernel():
    """Test c1 = c2 = 0 for a translation-invariant symmetric kernel"""
    c1, c2 = cancellation_residuals(PowerKernel(2, 0.4), [0.3, -0.2], [0.25, 0.5])
    assert c1 == 0.0
    assert c2 == 0.0


def test_cancellation_residuals_of_skewed_kernel():
    """Test c1 = 0 and c2 = 8 eps / (1 - 2s) for the skewed kernel in d = 2"""
    eps, s = 0.1, 0.25
    residuals = cancellation_residuals(SkewedKernel(2, s, eps), [0.0, 0.0], [0.25, 0.5])
    assert residuals.c1 == 0.0
    assert residuals.c2 == pytest.approx(8.0 * eps / (1.0 - 2.0 * s), rel=5e-3)
    assert not residuals.c2_enforced


def test_cancellation_radii_validation():
    """Test that literal radii must lie in (0, 1)"""
    K = PowerKernel(2, 0.4)
    with pytest.raises(ValidationError, match=r"\(0, 1\)"):
        cancellation_residuals(K, [0.0, 0.0], [0.5, 1.5])
    residuals = cancellation_residuals(K, [0.0, 0.0], [0.5, 1.5], literal=False)
    assert residuals.radii == [0.5, 1.5]


def test_nondivergence_residual():
    """Test that the skewed kernel has relative odd part eps and symmetric kernels none"""
    offsets = [[0.5, 0.0], [0.3, 0.4], [-0.2, 0.1]]
    assert nondivergence_residual(SkewedKernel(2, 0.5, 0.3), [0.0, 0.0], offsets) == pytest.approx(0.3)
    assert nondivergence_residual(PowerKernel(2, 0.5), [0.0, 0.0], offsets) == 0.0
    assert nondivergence_residual(PowerKernel(2, 0.5), [0.0, 0.0], np.empty((0, 2))) == 0.0


def test_directional_lower_bound_of_power_kernel():
    """Test r^(2s-2) int (w . e)_+^2 |w|^(-2-2s) = pi / (2 (2 - 2s)) in d = 2"""
    s = 0.5
    value = directional_lower_bound(PowerKernel(2, s), [0.0, 0.0], [0.5, 1.0])
    assert value == pytest.approx(math.pi / (2.0 * (2.0 - 2.0 * s)), rel=1e-2)
    assert directional_lower_bound(ZeroKernel(2, s), [0.0, 0.0], [1.0]) == 0.0


def test_coercivity_of_fractional_laplacian_kernel():
    """Test that the lattice form is positive and close to 2 |f|_Hs^2"""
    grid = VelocityGrid(2, 32, math.pi)
    f = SampledField(grid, np.cos(2.0 * grid.points[..., 0]))
    K = PowerKernel(2, 0.5, scale=fractional_laplacian_constant(2, 0.5))
    result = coercivity_check(K, f)
    assert result.form > result.form_uncorrected > 0.0
    assert 1.2 < result.ratio < 2.2
    zero = coercivity_check(ZeroKernel(2, 0.5), f)
    assert zero.form == 0.0


def test_pair_budget_is_enforced():
    """Test that oversized double sums are refused"""
    grid = VelocityGrid(2, 16, 1.0)
    f = SampledField(grid, np.sin(math.pi * grid.points[..., 0]))
    with pytest.raises(BudgetExceededError, match="budget"):
        coercivity_check(PowerKernel(2, 0.5), f, max_pairs=1000)
    with pytest.raises(BudgetExceededError):
        hs_bilinear_check(PowerKernel(2, 0.5), f, f, max_pairs=1000)


def test_bilinear_check_zero_function():
    """Test that <L_K f, 0> vanishes"""
    grid = VelocityGrid(2, 8, 1.0)
    f = SampledField(grid, np.sin(math.pi * grid.points[..., 0]))
    zero = SampledField(grid, np.zeros(grid.shape))
    pairing, scale, ratio = hs_bilinear_check(PowerKernel(2, 0.5), f, zero)
    assert pairing == 0.0
    assert ratio == 0.0
    with pytest.raises(ValidationError, match="same grid"):
        hs_bilinear_check(PowerKernel(2, 0.5), f, SampledField(VelocityGrid(2, 8, 2.0), zero.values))


def test_ellipticity_report_passes_and_fails():
    """Test the per-probe table and the verdict against declared constants"""
    K = PowerKernel(2, 0.25)
    velocities = [[0.0, 0.0], [1.0, 0.0]]
    constants = {"lambda_min": 0.5, "Lambda_max": 10.0, "mu_min": 1.0, "c1_max": 1e-8}
    report = ellipticity_report(K, velocities, [0.5, 1.0], constants=constants, gamma=0.0)
    assert report.passed
    frame = report.to_frame()
    assert len(frame) == 2
    assert frame["speed"].tolist() == [0.0, 1.0]
    assert frame["Lambda"].iloc[0] == pytest.approx(2.0 * math.pi / 1.5)
    assert frame["pass_lambda"].all()
    summary = report.summary()
    assert summary["probes"] == 2
    assert set(summary["bands"]) == {"lambda", "Lambda"}
    failing = ellipticity_report(K, velocities, [0.5], constants={"lambda_min": 2.0})
    assert not failing.passed


class _TimeScaledKernel(KernelFunction):
    """(1 + t) |w|^(-d-2s): constant in x and v, linear in t"""

    def along(self, v, w):
        return np.linalg.norm(w, axis=-1) ** (-self.d - 2.0 * self.s)

    def along_at(self, t, x, v, w):
        return (1.0 + t) * self.along(v, w)


def test_kernel_coefficient_modulus():
    """Test zero modulus for a time-independent kernel and the exact value for a linear one"""
    z1 = KineticPoint(0.0, [0.0, 0.0], [0.0, 0.0])
    z2 = KineticPoint(0.5, [0.3, 0.0], [1.0, 0.0])
    pairs = [(z1, z2, 1.0)]
    assert kernel_coefficient_modulus(PowerKernel(2, 0.5), pairs, 0.5, [0.5, 1.0]) == 0.0
    value = kernel_coefficient_modulus(_TimeScaledKernel(2, 0.5), pairs, 0.5, [0.5, 1.0])
    assert value == pytest.approx(0.5 * 2.0 * math.pi, rel=1e-10)
