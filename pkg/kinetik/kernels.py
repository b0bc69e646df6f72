"""Kernel functions K(v, v') and the synthetic kernels used to test ellipticity checks"""

import math

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ValidationError
from .quadrature import sphere_measure


def fractional_laplacian_constant(d, s):
    """C such that the operator with kernel C |w|^(-d-2s) is -(-Delta)^s"""
    return 4.0**s * gamma_fn(d / 2.0 + s) / (math.pi ** (d / 2.0) * abs(gamma_fn(-s)))


class KernelFunction:
    """Map (v, v') -> K(v, v') >= 0, evaluated along rays w = v' - v.

    along(v, w) broadcasts v and w of shape (..., d). Subclasses set
    symmetric when K(v, v + w) = K(v, v - w) and support_radius when K
    vanishes for |w| beyond it.
    """

    provenance = "synthetic"
    symmetric = False
    translation_invariant = False
    support_radius = None
    is_zero = False

    def __init__(self, d, s):
        if d not in (2, 3):
            raise ValidationError(f"Kernel dimension must be 2 or 3, got {d}")
        if not 0.0 < s < 1.0:
            raise ValidationError(f"Kernel order must lie in (0, 1), got {s}")
        self.d = d
        self.s = s

    def along(self, v, w):
        raise NotImplementedError

    def along_at(self, t, x, v, w):
        """Kernel at phase point (t, x, v); time and space independent by default"""
        return self.along(v, w)

    def __call__(self, v, v_prime):
        v = np.asarray(v, dtype=float)
        v_prime = np.asarray(v_prime, dtype=float)
        if np.any(np.all(v == v_prime, axis=-1)):
            raise ValidationError("Kernel is not evaluated on the diagonal v' = v")
        return self.along(v, v_prime - v)

    def tail_mass(self, v, radius):
        """Integral of K(v, v + w) over |w| > radius, when known in closed form"""
        return None


def _norm(w):
    return np.linalg.norm(w, axis=-1)


class PowerKernel(KernelFunction):
    """scale |w|^(-d-2s), optionally cut off at |w| >= truncation"""

    symmetric = True
    translation_invariant = True

    def __init__(self, d, s, scale=1.0, truncation=None):
        super().__init__(d, s)
        self.scale = float(scale)
        self.truncation = truncation
        self.support_radius = truncation

    def along(self, v, w):
        r = _norm(np.asarray(w, dtype=float))
        out = self.scale * r ** (-self.d - 2.0 * self.s)
        if self.truncation is not None:
            out = np.where(r < self.truncation, out, 0.0)
        return out

    def tail_mass(self, v, radius):
        if self.truncation is not None and radius >= self.truncation:
            return 0.0
        if self.truncation is not None:
            return (
                self.scale * sphere_measure(self.d)
                * (radius ** (-2.0 * self.s) - self.truncation ** (-2.0 * self.s))
                / (2.0 * self.s)
            )
        return self.scale * sphere_measure(self.d) * radius ** (-2.0 * self.s) / (2.0 * self.s)


def _cap_mask(w, axis, half_angle):
    r = _norm(w)
    cos_angle = np.abs(w @ axis) / np.where(r > 0, r, 1.0)
    return cos_angle >= math.cos(half_angle)


class ConeKernel(KernelFunction):
    """|w|^(-d-2s) on the double cap of half-angle half_angle around +-axis, 0 elsewhere"""

    symmetric = True
    translation_invariant = True

    def __init__(self, d, s, axis, half_angle, truncation=None):
        super().__init__(d, s)
        axis = np.asarray(axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.half_angle = float(half_angle)
        self.truncation = truncation
        self.support_radius = truncation

    def along(self, v, w):
        w = np.asarray(w, dtype=float)
        r = _norm(w)
        out = np.where(
            _cap_mask(w, self.axis, self.half_angle), r ** (-self.d - 2.0 * self.s), 0.0
        )
        if self.truncation is not None:
            out = np.where(r < self.truncation, out, 0.0)
        return out


class TwoAxisKernel(KernelFunction):
    """Mass on the coordinate lines, approximated by narrow caps around +-e1 and +-e2"""

    symmetric = True
    translation_invariant = True

    def __init__(self, s, half_angle=0.1, truncation=None):
        super().__init__(2, s)
        self.caps = [
            ConeKernel(2, s, (1.0, 0.0), half_angle, truncation),
            ConeKernel(2, s, (0.0, 1.0), half_angle, truncation),
        ]
        self.support_radius = truncation

    def along(self, v, w):
        return np.maximum(self.caps[0].along(v, w), self.caps[1].along(v, w))


class SkewedKernel(KernelFunction):
    """|w|^(-d-2s) (1 + eps sign(w_1)), the simplest kernel without cancellation symmetry"""

    translation_invariant = True

    def __init__(self, d, s, epsilon, truncation=None):
        super().__init__(d, s)
        if abs(epsilon) >= 1.0:
            raise ValidationError("Skew must satisfy |eps| < 1 to keep K nonnegative")
        self.epsilon = float(epsilon)
        self.truncation = truncation
        self.support_radius = truncation

    def along(self, v, w):
        w = np.asarray(w, dtype=float)
        r = _norm(w)
        out = r ** (-self.d - 2.0 * self.s) * (1.0 + self.epsilon * np.sign(w[..., 0]))
        if self.truncation is not None:
            out = np.where(r < self.truncation, out, 0.0)
        return out


class ZeroKernel(KernelFunction):
    symmetric = True
    translation_invariant = True
    is_zero = True
    support_radius = 0.0

    def along(self, v, w):
        return np.zeros(np.broadcast_shapes(np.shape(v), np.shape(w))[:-1])

    def tail_mass(self, v, radius):
        return 0.0


class ScaledKernel(KernelFunction):
    """K_r(v, v') = r^(d+2s) K(v0 + r v, v0 + r v'): rescaled and Galilean-translated K"""

    def __init__(self, kernel, r=1.0, v0=None):
        super().__init__(kernel.d, kernel.s)
        if not r > 0:
            raise ValidationError(f"Scaling factor must be positive, got {r}")
        self.kernel = kernel
        self.r = float(r)
        self.v0 = np.zeros(kernel.d) if v0 is None else np.asarray(v0, dtype=float)
        self.symmetric = kernel.symmetric
        self.translation_invariant = kernel.translation_invariant
        self.provenance = kernel.provenance
        self.is_zero = kernel.is_zero
        if kernel.support_radius is not None:
            self.support_radius = kernel.support_radius / self.r

    def along(self, v, w):
        factor = self.r ** (self.d + 2.0 * self.s)
        v = np.asarray(v, dtype=float)
        return factor * self.kernel.along(self.v0 + self.r * v, self.r * np.asarray(w))
