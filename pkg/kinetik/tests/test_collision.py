import math

import numpy as np
import pytest

from kinetik.collision import (
    BoltzmannKernel,
    CollisionModel,
    apply_lk,
    calibrate_cb,
    cancellation_constant,
    cancellation_ratio,
    carleman_kernel,
    conservation_projection,
    entropy_dissipation,
    grid_moments,
    kf_comparison_integral,
    lower_order_term,
    odd_exponent,
    post_collisional,
    q_carleman,
    q_carleman_grid,
    q_sigma,
    q_sigma_terms,
)
from kinetik.errors import QuadratureError, ValidationError
from kinetik.fields import (
    AlgebraicDecay,
    DensityField,
    FieldSum,
    Maxwellian,
    SampledField,
    VelocityGrid,
    ZeroField,
    sample,
)
from kinetik.kernels import PowerKernel, ZeroKernel, fractional_laplacian_constant
from kinetik.quadrature import QuadratureSettings

COARSE = dict(
    plane_panels=6,
    plane_order=4,
    plane_azimuths=4,
    directions=8,
    theta_nodes=4,
    radial_inner_nodes=4,
    radial_order=4,
    radial_max_panel=1.0,
)


def _model(gamma=0.0, s=0.5, **overrides):
    return CollisionModel(2, gamma, s, QuadratureSettings(**{**COARSE, **overrides}))


def _maxwellian(n=16, L=5.0):
    return sample(Maxwellian(), VelocityGrid(2, n, L))


def test_model_validation():
    """Test the admissible ranges of d, gamma and s"""
    with pytest.raises(ValidationError, match="2 or 3"):
        CollisionModel(4, 0.0, 0.5)
    with pytest.raises(ValidationError, match="exceed -d"):
        CollisionModel(2, -2.0, 0.5)
    with pytest.raises(ValidationError, match="not exceed 1"):
        CollisionModel(3, 1.5, 0.5)
    with pytest.raises(ValidationError, match=r"\(0, 1\)"):
        CollisionModel(2, 0.0, 1.0)


def test_regularity_range_flag():
    """Test that gamma + 2s outside [0, 2] is accepted but flagged"""
    assert CollisionModel(2, 1.0, 0.75).outside_regularity_range
    assert CollisionModel(3, -2.5, 0.2).outside_regularity_range
    assert not CollisionModel(3, -1.0, 0.5).outside_regularity_range


def test_angular_kernel_folding():
    """Test b(cos) + b(-cos) on the upper hemisphere and zero below"""
    model = CollisionModel(2, 0.0, 0.25)
    p = model.singular_exponent
    assert p == -1.5
    assert model.angular_kernel(0.0) == pytest.approx(2.0 * math.sqrt(0.5) ** p)
    assert model.angular_kernel(-0.5) == 0.0


def test_post_collisional_conservation():
    """Test momentum and energy conservation of the sigma parametrization"""
    rng = np.random.default_rng(0)
    for _ in range(20):
        v, v_star = rng.normal(size=(2, 3))
        sigma = rng.normal(size=3)
        sigma /= np.linalg.norm(sigma)
        vp, vsp = post_collisional(v, v_star, sigma)
        np.testing.assert_allclose(vp + vsp, v + v_star, atol=1e-12)
        assert vp @ vp + vsp @ vsp == pytest.approx(v @ v + v_star @ v_star, rel=1e-12)


def test_post_collisional_grazing_and_swap():
    """Test that sigma along v - v_* leaves the pair unchanged and -sigma swaps it"""
    v, v_star = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    vp, vsp = post_collisional(v, v_star, [1.0, 0.0])
    np.testing.assert_allclose(vp, v)
    np.testing.assert_allclose(vsp, v_star)
    vp, vsp = post_collisional(v, v_star, [-1.0, 0.0])
    np.testing.assert_allclose(vp, v_star)
    with pytest.raises(ValidationError, match="unit vector"):
        post_collisional(v, v_star, [1.0, 1.0])


def test_zero_field_gives_zero_kernel():
    """Test that f = 0 gives K_f = 0 and Q = 0"""
    f = sample(ZeroField(), VelocityGrid(2, 8, 2.0))
    model = _model()
    assert carleman_kernel(f, [0.0, 0.0], [1.0, 0.0], model) == 0.0
    assert q_carleman(f, [0.5, 0.0], model) == 0.0
    q, drift = q_carleman_grid(f, model)
    assert not np.any(q)
    assert drift["mass"] == 0.0


def test_kernel_on_diagonal_rejected():
    """Test that K_f(v, v) is undefined"""
    with pytest.raises(ValidationError, match="v' != v"):
        carleman_kernel(_maxwellian(), [0.5, 0.5], [0.5, 0.5], _model())


def test_kernel_is_linear_in_f():
    """Test K_{2f} = 2 K_f"""
    f = _maxwellian()
    model = _model()
    v = np.array([[0.0, 0.0], [0.5, -1.0], [2.0, 1.0]])
    w = np.array([[0.3, 0.1], [-1.0, 0.5], [0.0, 2.0]])
    single = BoltzmannKernel(f, model).along(v, w)
    double = BoltzmannKernel(f.scaled(2.0), model).along(v, w)
    np.testing.assert_allclose(double, 2.0 * single, rtol=1e-13)


def test_kernel_is_nonnegative_and_mirror_symmetric():
    """Test K_f >= 0 and K_f(v, v + w) = K_f(v, v - w) bit for bit"""
    f = _maxwellian()
    K = BoltzmannKernel(f, _model(gamma=-1.0, s=0.3))
    rng = np.random.default_rng(1)
    v = rng.uniform(-2.0, 2.0, size=(25, 2))
    w = rng.normal(size=(25, 2))
    forward = K.along(v, w)
    np.testing.assert_array_equal(forward, K.along(v, -w))
    assert np.all(forward >= 0.0)
    assert np.any(forward > 0.0)


def test_slow_tail_rejected():
    """Test that the hyperplane integral needs q > gamma + 2s + d"""
    f = sample(AlgebraicDecay(1.0, 2.5), VelocityGrid(2, 32, 8.0))
    with pytest.raises(QuadratureError, match="too slow"):
        carleman_kernel(f, [0.0, 0.0], [1.0, 0.0], _model())


def test_odd_exponent():
    """Test the odd-part exponent on both sides of s = 1/2"""
    assert odd_exponent(0.25) == -0.5
    assert odd_exponent(0.75) == pytest.approx(-0.5)
    assert odd_exponent(0.5) == 0.0


def test_apply_lk_annihilates_constants():
    """Test L_K 1 = 0 for a truncated kernel inside the box"""
    grid = VelocityGrid(2, 16, 4.0)
    f = DensityField(grid, np.full(grid.shape, 3.0))
    K = PowerKernel(2, 0.4, truncation=1.0)
    assert apply_lk(K, f, [0.0, 0.0], QuadratureSettings()) == pytest.approx(0.0, abs=1e-10)
    assert apply_lk(ZeroKernel(2, 0.4), f, [0.0, 0.0]) == 0.0


def test_apply_lk_annihilates_affine_functions():
    """Test that symmetric kernels do not see the affine part of f"""
    grid = VelocityGrid(2, 32, 4.0)
    f = DensityField(grid, 5.0 + 0.5 * grid.points[..., 0] - 0.25 * grid.points[..., 1])
    K = PowerKernel(2, 0.3, truncation=1.0)
    settings = QuadratureSettings(interpolation="linear")
    value = apply_lk(K, f, [0.25, -0.5], settings)
    assert value == pytest.approx(0.0, abs=1e-8)


def test_apply_lk_matches_fractional_laplacian():
    """Test L_K cos(v1) = -cos(v1) for the fractional Laplacian kernel with s = 1/2"""
    grid = VelocityGrid(2, 64, 2.0 * math.pi)
    f = SampledField(grid, np.cos(grid.points[..., 0]))
    K = PowerKernel(2, 0.5, scale=fractional_laplacian_constant(2, 0.5))
    for v in ([0.0, 0.0], [1.0, 0.3]):
        value = apply_lk(K, f, v, QuadratureSettings(), periodic=True)
        assert value == pytest.approx(-math.cos(v[0]), abs=0.02)


def test_apply_lk_does_not_depend_on_h_pv():
    """Test that moving the Taylor radius leaves L_K cos(v1) = -cos(v1)"""
    grid = VelocityGrid(2, 64, 2.0 * math.pi)
    f = SampledField(grid, np.cos(grid.points[..., 0]))
    K = PowerKernel(2, 0.5, scale=fractional_laplacian_constant(2, 0.5))
    for h_pv in (None, 0.5, 1.0):
        value = apply_lk(K, f, [0.0, 0.0], QuadratureSettings(h_pv=h_pv), periodic=True)
        assert value == pytest.approx(-1.0, abs=0.02)


def test_lower_order_term_for_constant_gamma():
    """Test f(v) (f * |.|^0)(v) = f(v) times the mass"""
    f = sample(Maxwellian(), VelocityGrid(2, 32, 6.0))
    model = CollisionModel(2, 0.0, 0.5)
    assert lower_order_term(f, [0.0, 0.0], model) == pytest.approx(
        1.0 / (2.0 * math.pi), rel=1e-3
    )


def test_cancellation_ratio_is_homogeneous():
    """Test that the ratio does not change under f -> 2f"""
    f = _maxwellian()
    model = _model(gamma=-1.0, s=0.4)
    v = [0.5, 0.0]
    ratio = cancellation_ratio(f, v, model)
    assert math.isfinite(ratio)
    assert cancellation_ratio(f.scaled(2.0), v, model) == pytest.approx(ratio, rel=1e-12)


def test_grid_moments_of_maxwellian():
    """Test mass 1, momentum 0 and energy d on a sampled Maxwellian"""
    f = sample(Maxwellian(), VelocityGrid(2, 32, 6.0))
    moments = grid_moments(f.grid, f.values)
    assert moments["mass"] == pytest.approx(1.0, rel=1e-6)
    # the node at -L has no mirror image on [-L, L)
    np.testing.assert_allclose(moments["momentum"], 0.0, atol=1e-6)
    assert moments["energy"] == pytest.approx(2.0, rel=1e-6)


def test_conservation_projection():
    """Test that projected values carry no mass, momentum or energy"""
    grid = VelocityGrid(2, 8, 2.0)
    rng = np.random.default_rng(2)
    q = rng.normal(size=grid.shape)
    projected = conservation_projection(grid, q)
    moments = grid_moments(grid, projected)
    assert moments["mass"] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(moments["momentum"], 0.0, atol=1e-12)
    assert moments["energy"] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(conservation_projection(grid, projected), projected, atol=1e-12)


def test_conservation_projection_respects_mask():
    """Test that nodes outside the mask are left alone"""
    grid = VelocityGrid(2, 8, 2.0)
    q = np.ones(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[2:6, 2:6] = True
    projected = conservation_projection(grid, q, mask)
    assert np.all(projected[~mask] == 1.0)
    np.testing.assert_allclose(projected[mask], 0.0, atol=1e-12)


def test_entropy_dissipation_of_zero_operator():
    """Test that Q = 0 dissipates no entropy"""
    f = _maxwellian()
    assert entropy_dissipation(f, np.zeros(f.grid.shape)) == 0.0


def test_q_sigma_vanishes_on_maxwellian():
    """Test |Q(M, M)| <= 1e-3 times the size of its gain and loss parts"""
    model = _model()
    grid = VelocityGrid(2, 64, 6.0)
    assert q_sigma(sample(ZeroField(), grid), np.zeros(2), model) == 0.0
    assert q_sigma_terms(sample(ZeroField(), grid), np.zeros(2), model) == (0.0, 0.0)
    maxwellian = sample(Maxwellian(), grid, interpolation="cubic")
    for v in ([0.0, 0.0], [0.7, -0.4]):
        value, scale = q_sigma_terms(maxwellian, v, model)
        assert scale > 0.0
        assert abs(value) <= 1e-3 * scale


def test_q_sigma_refinement_rejects_coarse_theta_rule():
    """Test that a theta rule which changes under doubling raises"""
    grid = VelocityGrid(2, 32, 6.0)
    bumps = sample(
        FieldSum([Maxwellian(0.5, [1.5, 0.0]), Maxwellian(0.5, [-1.5, 0.0])]),
        grid,
        interpolation="cubic",
    )
    model = _model(theta_nodes=2, convergence_tolerance=1e-15)
    with pytest.raises(QuadratureError, match="did not converge"):
        q_sigma(bumps, np.zeros(2), model)


def test_q_sigma_refinement_can_be_disabled():
    """Test that a zero tolerance skips the doubled theta rule"""
    grid = VelocityGrid(2, 32, 6.0)
    f = sample(Maxwellian(), grid, interpolation="cubic")
    assert QuadratureSettings().convergence_tolerance == 1e-2
    value = q_sigma(f, np.zeros(2), _model(theta_nodes=2, convergence_tolerance=0.0))
    assert math.isfinite(value)


def test_cancellation_constant_grows_with_gamma():
    """Test c_b > 0 and monotone in gamma for a fixed angular singularity"""
    values = [cancellation_constant(CollisionModel(2, gamma, 0.3)) for gamma in (-1.0, 0.0, 1.0)]
    assert all(math.isfinite(value) for value in values)
    assert values[0] > 0.0
    assert values[0] < values[1] < values[2]


def test_cancellation_constant_is_finite_across_dimensions():
    """Test that the grazing end of the integrand stays finite for every d and s"""
    for d in (2, 3):
        for s in (0.1, 0.5, 0.9):
            value = cancellation_constant(CollisionModel(d, 0.0, s))
            assert math.isfinite(value)
            assert value > 0.0


def test_kf_comparison_integral_of_maxwellian():
    """Test int_{w perp e} M(w) |w|^2 dw = 2^(1/2) Gamma(3/2) / pi for d = 2"""
    f = sample(Maxwellian(), VelocityGrid(2, 32, 6.0), interpolation="cubic")
    model = _model(gamma=0.0, s=0.5, radial_inner_nodes=8, plane_panels=12)
    expected = math.sqrt(2.0) * math.gamma(1.5) / math.pi
    value = kf_comparison_integral(f, np.zeros(2), [1.0, 0.0], model)
    assert value == pytest.approx(expected, rel=5e-3)


def _two_bumps(grid):
    return sample(
        FieldSum([Maxwellian(0.5, [1.5, 0.0]), Maxwellian(0.5, [-1.5, 0.0])]),
        grid,
        interpolation="cubic",
    )


def test_q_carleman_vanishes_on_maxwellian():
    """Test that L_K M balances c_b M (M * |.|^gamma) at the center of a Maxwellian"""
    f = sample(Maxwellian(), VelocityGrid(2, 64, 6.0), interpolation="cubic")
    model = CollisionModel(2, 0.0, 0.5)
    c_b = calibrate_cb(f, model)
    value = q_carleman(f, np.zeros(2), model, c_b)
    assert abs(value) < 0.01 * c_b * lower_order_term(f, np.zeros(2), model)


def test_q_carleman_agrees_with_q_sigma():
    """Test the Carleman and sigma representations of Q on a relaxing two-bump field"""
    f = _two_bumps(VelocityGrid(2, 32, 6.0))
    model = CollisionModel(2, 0.0, 0.25)
    c_b = calibrate_cb(f, model)
    kernel = BoltzmannKernel(f, model)
    points = np.random.default_rng(7).uniform(-1.5, 1.5, size=(5, 2))
    carleman = np.array([q_carleman(f, v, model, c_b, kernel) for v in points])
    direct = np.array([q_sigma(f, v, model) for v in points])
    assert np.linalg.norm(carleman - direct) < 0.05 * np.linalg.norm(direct)


def test_q_carleman_grid_projection_conserves_moments():
    """Test that projected Q carries no mass, momentum or energy"""
    f = _two_bumps(VelocityGrid(2, 16, 6.0))
    model = _model(s=0.25)
    q, drift = q_carleman_grid(f, model, c_b=calibrate_cb(f, model))
    moments = grid_moments(f.grid, q)
    assert moments["mass"] == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(moments["momentum"], 0.0, atol=1e-10)
    assert moments["energy"] == pytest.approx(0.0, abs=1e-10)
    assert set(drift) == {"mass", "momentum", "energy"}
    assert entropy_dissipation(f, q) > 0.0
