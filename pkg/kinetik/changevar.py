"""Anisotropic change of variables around a large velocity and its uniformity sweep"""

import logging

import numpy as np
import pandas as pd

from .collision import BoltzmannKernel, calibrate_cb, convolution_gamma
from .ellipticity import avg_upper_bound, cancellation_residuals, cone_estimate
from .errors import ValidationError
from .geometry import KineticPoint, NodeSet, galilean_compose, galilean_inverse
from .kernels import KernelFunction, ScaledKernel
from .parallel import parallel_map

logger = logging.getLogger(__name__)

CONTROL_MEASURE = 0.25
DEFAULT_SWEEP = (1.0, 2.0, 4.0, 8.0, 16.0)


class VelocityTransform:
    """T(a v0/|v0| + w) = (a/|v0|) v0/|v0| + w for w orthogonal to v0; identity for |v0| < 1"""

    def __init__(self, v0):
        self.v0 = np.asarray(v0, dtype=float)
        self.speed = float(np.linalg.norm(self.v0))
        self.identity = self.speed < 1.0
        self.unit = self.v0 / self.speed if self.speed > 0.0 else np.zeros_like(self.v0)

    def __repr__(self):
        return f"VelocityTransform(v0={self.v0.tolist()})"

    def _stretch(self, v, factor):
        v = np.asarray(v, dtype=float)
        if self.identity:
            return v.copy()
        along = v @ self.unit
        return v + (factor - 1.0) * along[..., None] * self.unit

    def __call__(self, v):
        return self._stretch(v, 1.0 / self.speed if not self.identity else 1.0)

    def inverse(self, v):
        return self._stretch(v, self.speed if not self.identity else 1.0)

    @property
    def matrix(self):
        d = self.v0.size
        if self.identity:
            return np.eye(d)
        return np.eye(d) + (1.0 / self.speed - 1.0) * np.outer(self.unit, self.unit)

    @property
    def determinant(self):
        return 1.0 if self.identity else 1.0 / self.speed


def apply_T(v0, v):
    return VelocityTransform(v0)(v)


def time_factor(speed, gamma, s):
    """|v0|^(-gamma-2s), equal to 1 on the identity branch"""
    return 1.0 if speed < 1.0 else speed ** (-gamma - 2.0 * s)


class KineticTransform:
    """z -> z0 o (c t, c T x, T v) with c = |v0|^(-gamma-2s)"""

    def __init__(self, z0, gamma, s):
        self.z0 = z0
        self.T = VelocityTransform(z0.v)
        self.c = time_factor(self.T.speed, gamma, s)

    def __call__(self, z):
        inner = KineticPoint(self.c * z.t, self.c * self.T(z.x), self.T(z.v))
        return galilean_compose(self.z0, inner)

    def apply_nodes(self, nodes):
        z0 = self.z0
        t = self.c * nodes.t
        x = self.c * self.T(nodes.x)
        v = self.T(nodes.v)
        return NodeSet(z0.t + t, z0.x + x + t[:, None] * z0.v, z0.v + v)

    def inverse(self, z):
        local = galilean_compose(galilean_inverse(self.z0), z)
        return KineticPoint(
            local.t / self.c, self.T.inverse(local.x) / self.c, self.T.inverse(local.v)
        )


class TransformedKernel(KernelFunction):
    """K(t, x, v, v + w) = pref K(Tz, v0 + T v + T w), pref = |v0|^(-gamma-2s) (times 1/|v0|)"""

    def __init__(self, kernel, z0, gamma, s, jacobian=True):
        super().__init__(kernel.d, kernel.s)
        self.kernel = kernel
        self.transform = KineticTransform(z0, gamma, s)
        T = self.transform.T
        self.prefactor = self.transform.c * (T.determinant if jacobian else 1.0)
        self.symmetric = kernel.symmetric
        self.translation_invariant = kernel.translation_invariant
        self.provenance = kernel.provenance
        self.is_zero = kernel.is_zero
        if kernel.support_radius is not None:
            self.support_radius = kernel.support_radius * max(1.0, T.speed)

    def along_at(self, t, x, v, w):
        z0, T, c = self.transform.z0, self.transform.T, self.transform.c
        v = np.asarray(v, dtype=float)
        tt = z0.t + c * t
        xx = z0.x + c * T(np.asarray(x, dtype=float)) + c * t * z0.v
        vv = z0.v + T(v)
        return self.prefactor * self.kernel.along_at(tt, xx, vv, T(np.asarray(w, dtype=float)))

    def along(self, v, w):
        return self.along_at(0.0, np.zeros(self.d), v, w)


def transform_kernel(K, z0, model, jacobian=True):
    return TransformedKernel(K, z0, model.gamma, model.s, jacobian)


class TransformedSource:
    """Lower order term c_b c f(v0 + T v) (f * |.|^gamma)(v0 + T v) seen from Q_1"""

    def __init__(self, f, z0, model, c_b):
        self.f = f
        self.model = model
        self.c_b = float(c_b)
        self.transform = KineticTransform(z0, model.gamma, model.s)

    def evaluate(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        z0v, T = self.transform.z0.v, self.transform.T
        points = z0v + T(v)
        values = self.f.evaluate(points, order=self.model.settings.order)
        out = np.zeros(len(points))
        for i, (point, value) in enumerate(zip(points, values)):
            if value > 0.0:
                out[i] = value * convolution_gamma(self.f, point, self.model)
        return self.c_b * self.transform.c * out

    def evaluate_nodes(self, nodes):
        return self.evaluate(nodes.v)


def transformed_source(f, z0, model, c_b=None):
    if c_b is None:
        c_b = calibrate_cb(f, model)
    return TransformedSource(f, z0, model, c_b)


class SweepResult:
    def __init__(self, frame):
        self.frame = frame

    def ratio(self, column):
        values = self.frame[column].to_numpy()
        lo = values.min()
        return float(values.max() / lo) if lo > 0.0 else float("inf")

    @property
    def ratios(self):
        return {name: self.ratio(name) for name in ("lambda", "Lambda", "mu")}

    @property
    def control_degradation(self):
        """lambda of the untransformed kernel at the smallest over the largest |v0|"""
        values = self.frame.sort_values("speed")["control_lambda"].to_numpy()
        return float(values[0] / values[-1]) if values[-1] > 0.0 else float("inf")

    def summary(self):
        return {
            "ratios": self.ratios,
            "control_degradation": self.control_degradation,
            "speeds": self.frame["speed"].tolist(),
        }


def uniformity_sweep(f, speeds, model, direction=None, radii=(0.25, 0.5, 1.0),
                     cancellation_radii=(0.25, 0.5, 0.75), jacobian=True):
    """Ellipticity constants of the transformed Carleman kernel on Q_1 for each |v0|"""
    if not 0.0 <= model.gamma + 2.0 * model.s <= 2.0:
        raise ValidationError(
            f"changevar: uniformity sweep needs gamma + 2s in [0, 2], got "
            f"{model.gamma + 2.0 * model.s:.3f}"
        )
    if f.is_zero:
        raise ValidationError("changevar: vacuum field violates (H); sweep rejected")
    d = model.d
    direction = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    K = BoltzmannKernel(f, model)
    settings = model.settings
    origin = np.zeros(d)

    def probe(speed):
        v0 = speed * direction
        z0 = KineticPoint(0.0, np.zeros(d), v0)
        transformed = transform_kernel(K, z0, model, jacobian)
        cone = cone_estimate(transformed, origin, settings=settings)
        residuals = cancellation_residuals(transformed, origin, cancellation_radii, settings=settings)
        control = cone_estimate(ScaledKernel(K, 1.0, v0), origin, settings=settings)
        row = {
            "speed": float(speed),
            "lambda": cone.lambda_hat,
            "Lambda": avg_upper_bound(transformed, origin, radii, settings),
            "mu": cone.measure,
            "c1": residuals.c1,
            "c2": residuals.c2,
            "control_lambda": control.lambda_at_measure(CONTROL_MEASURE),
        }
        logger.info(
            f"|v0|={speed:g}: lambda={row['lambda']:.4g} Lambda={row['Lambda']:.4g} "
            f"mu={row['mu']:.4g} control={row['control_lambda']:.4g}"
        )
        return row

    rows = parallel_map(probe, [float(v) for v in speeds])
    return SweepResult(pd.DataFrame(rows))
