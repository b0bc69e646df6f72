import math

import numpy as np
import pandas as pd
import pytest

from kinetik.changevar import (
    KineticTransform,
    SweepResult,
    TransformedKernel,
    VelocityTransform,
    apply_T,
    time_factor,
    transformed_source,
    uniformity_sweep,
)
from kinetik.collision import CollisionModel, convolution_gamma
from kinetik.errors import ValidationError
from kinetik.fields import Maxwellian, VelocityGrid, ZeroField, sample
from kinetik.geometry import KineticPoint, NodeSet
from kinetik.kernels import PowerKernel
from kinetik.quadrature import QuadratureSettings

COARSE = QuadratureSettings(
    plane_panels=6, plane_order=4, plane_azimuths=4, directions=8, radial_inner_nodes=4
)


def test_transform_shrinks_along_v0_only():
    """Test that T divides the v0 component by |v0| and keeps the orthogonal part"""
    v0 = np.array([2.0, 0.0])
    np.testing.assert_allclose(apply_T(v0, v0), [1.0, 0.0])
    np.testing.assert_allclose(apply_T(v0, [0.0, 3.0]), [0.0, 3.0])
    np.testing.assert_allclose(apply_T(v0, [4.0, -1.0]), [2.0, -1.0])


def test_transform_identity_branch():
    """Test that |v0| < 1 leaves velocities unchanged"""
    T = VelocityTransform([0.5, 0.2])
    assert T.identity
    np.testing.assert_array_equal(T([1.0, 2.0]), [1.0, 2.0])
    assert T.determinant == 1.0
    np.testing.assert_array_equal(T.matrix, np.eye(2))


def test_transform_inverse_and_matrix():
    """Test T^-1 T = id, the matrix form and det T = 1/|v0|"""
    T = VelocityTransform([3.0, 4.0, 0.0])
    rng = np.random.default_rng(0)
    v = rng.normal(size=(10, 3))
    np.testing.assert_allclose(T.inverse(T(v)), v, atol=1e-12)
    np.testing.assert_allclose(v @ T.matrix.T, T(v), atol=1e-12)
    assert np.linalg.det(T.matrix) == pytest.approx(0.2)
    assert T.determinant == pytest.approx(0.2)


def test_time_factor():
    """Test |v0|^(-gamma-2s) and the identity branch"""
    assert time_factor(4.0, 0.0, 0.5) == pytest.approx(0.25)
    assert time_factor(4.0, -1.0, 0.5) == 1.0
    assert time_factor(0.5, 0.0, 0.5) == 1.0


def test_kinetic_transform_round_trip():
    """Test inverse(transform(z)) = z and agreement of the batched form"""
    z0 = KineticPoint(0.5, [1.0, 0.0], [3.0, 0.0])
    transform = KineticTransform(z0, 0.0, 0.5)
    assert transform.c == pytest.approx(1.0 / 3.0)
    z = KineticPoint(-0.2, [0.3, 0.4], [0.6, -0.5])
    image = transform(z)
    back = transform.inverse(image)
    assert back.t == pytest.approx(z.t)
    np.testing.assert_allclose(back.x, z.x, atol=1e-12)
    np.testing.assert_allclose(back.v, z.v, atol=1e-12)
    nodes = transform.apply_nodes(NodeSet([z.t], [z.x], [z.v]))
    assert nodes.t[0] == pytest.approx(image.t)
    np.testing.assert_allclose(nodes.x[0], image.x, atol=1e-12)
    np.testing.assert_allclose(nodes.v[0], image.v, atol=1e-12)


def test_transformed_power_kernel():
    """Test the prefactor |v0|^(-gamma-2s) / |v0| and the anisotropic rescaling"""
    z0 = KineticPoint(0.0, [0.0, 0.0], [4.0, 0.0])
    K = PowerKernel(2, 0.5, truncation=1.0)
    transformed = TransformedKernel(K, z0, 0.0, 0.5)
    assert transformed.prefactor == pytest.approx(1.0 / 16.0)
    assert transformed.along([0.0, 0.0], [0.5, 0.0]) == pytest.approx(4.0 * 0.5**-3)
    assert transformed.along([0.0, 0.0], [0.0, 0.5]) == pytest.approx(0.5**-3 / 16.0)
    assert transformed.support_radius == 4.0
    plain = TransformedKernel(K, z0, 0.0, 0.5, jacobian=False)
    assert plain.prefactor == pytest.approx(0.25)


def test_sweep_rejects_invalid_inputs():
    """Test the gamma + 2s range and the vacuum check"""
    grid = VelocityGrid(2, 16, 5.0)
    f = sample(Maxwellian(), grid)
    with pytest.raises(ValidationError, match="gamma \\+ 2s"):
        uniformity_sweep(f, [1.0], CollisionModel(2, -1.5, 0.25, COARSE))
    with pytest.raises(ValidationError, match="vacuum"):
        uniformity_sweep(sample(ZeroField(), grid), [1.0], CollisionModel(2, 0.0, 0.5, COARSE))


def test_sweep_result_ratios():
    """Test max/min ratios and the control degradation"""
    frame = pd.DataFrame(
        {
            "speed": [1.0, 2.0, 4.0],
            "lambda": [1.0, 2.0, 1.5],
            "Lambda": [3.0, 3.0, 3.0],
            "mu": [1.0, 0.0, 1.0],
            "control_lambda": [1.0, 0.5, 0.25],
        }
    )
    result = SweepResult(frame)
    assert result.ratios["lambda"] == 2.0
    assert result.ratios["Lambda"] == 1.0
    assert math.isinf(result.ratios["mu"])
    assert result.control_degradation == 4.0
    assert result.summary()["speeds"] == [1.0, 2.0, 4.0]


def test_sweep_on_maxwellian():
    """Test that the sweep reports positive constants for every speed"""
    f = sample(Maxwellian(), VelocityGrid(2, 16, 5.0))
    model = CollisionModel(2, 0.0, 0.5, COARSE)
    result = uniformity_sweep(f, [1.0, 2.0], model, cancellation_radii=(0.5,))
    frame = result.frame
    assert frame["speed"].tolist() == [1.0, 2.0]
    assert list(frame.columns) == ["speed", "lambda", "Lambda", "mu", "c1", "c2", "control_lambda"]
    assert (frame["lambda"] > 0.0).all()
    assert (frame["mu"] > 0.0).all()
    assert (frame["control_lambda"] > 0.0).all()


def test_transformed_source_prefactor():
    """Test h(z) = c_b |v0|^(-gamma-2s) f (f * |.|^gamma) at v0 + T v"""
    model = CollisionModel(2, 0.0, 0.5, COARSE)
    f = sample(Maxwellian(), VelocityGrid(2, 16, 6.0))
    z0 = KineticPoint(0.0, [0.0, 0.0], [4.0, 0.0])
    h = transformed_source(f, z0, model, c_b=2.0)
    point = np.array([[4.0, 0.0]])
    f_v = float(f.evaluate(point, order=model.settings.order)[0])
    expected = 2.0 * 0.25 * f_v * convolution_gamma(f, point[0], model)
    assert h.evaluate([[0.0, 0.0]])[0] == pytest.approx(expected, rel=1e-12)
    nodes = NodeSet([0.0, 0.0], np.zeros((2, 2)), [[0.0, 0.0], [4.0, 1.0]])
    np.testing.assert_allclose(h.evaluate_nodes(nodes), h.evaluate(nodes.v))

    near = transformed_source(f, KineticPoint(0.0, [0.0, 0.0], [0.5, 0.0]), model, c_b=2.0)
    point = np.array([[1.5, 0.0]])
    f_v = float(f.evaluate(point, order=model.settings.order)[0])
    expected = 2.0 * f_v * convolution_gamma(f, point[0], model)
    assert near.evaluate([[1.0, 0.0]])[0] == pytest.approx(expected, rel=1e-12)
