"""Kinetic scaling, the Galilean group, cylinders and kinetic polynomial degree"""

import itertools
import logging
import math

import numpy as np
from scipy.stats import qmc

from .errors import ValidationError
from .quadrature import ball_volume

logger = logging.getLogger(__name__)

EXTREMAL_OFFSET = 1e-9
DEGREE_TIE_TOLERANCE = 1e-12


class KineticPoint:
    """Phase point z = (t, x, v) with x, v in R^d, d in {2, 3}"""

    def __init__(self, t, x, v):
        x = np.array(x, dtype=float).reshape(-1)
        v = np.array(v, dtype=float).reshape(-1)
        if x.size != v.size:
            raise ValidationError(
                f"Dimension mismatch: x has {x.size} components, v has {v.size}"
            )
        if x.size not in (2, 3):
            raise ValidationError(f"Kinetic points need d = 2 or 3, got {x.size}")
        t = float(t)
        if not (math.isfinite(t) and np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValidationError("Kinetic point components must be finite")
        x.setflags(write=False)
        v.setflags(write=False)
        self.t = t
        self.x = x
        self.v = v

    @classmethod
    def origin(cls, d):
        return cls(0.0, np.zeros(d), np.zeros(d))

    @property
    def d(self):
        return self.x.size

    def __eq__(self, other):
        if not isinstance(other, KineticPoint):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.v, other.v)
        )

    def __hash__(self):
        return hash((self.t, self.x.tobytes(), self.v.tobytes()))

    def __repr__(self):
        return f"KineticPoint(t={self.t}, x={self.x.tolist()}, v={self.v.tolist()})"

    def as_nodes(self):
        return NodeSet(np.array([self.t]), self.x[None, :], self.v[None, :])


class NodeSet:
    """A batch of kinetic points stored column-wise"""

    def __init__(self, t, x, v):
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.x = np.asarray(x, dtype=float).reshape(self.t.size, -1)
        self.v = np.asarray(v, dtype=float).reshape(self.t.size, -1)
        if self.x.shape != self.v.shape:
            raise ValidationError("NodeSet x and v must have the same shape")

    def __len__(self):
        return self.t.size

    @property
    def d(self):
        return self.x.shape[1]

    def subset(self, mask):
        return NodeSet(self.t[mask], self.x[mask], self.v[mask])

    def point(self, i):
        return KineticPoint(self.t[i], self.x[i], self.v[i])


def _check_same_dim(z0, z):
    if z0.d != z.d:
        raise ValidationError(f"Dimension mismatch: {z0.d} vs {z.d}")


def galilean_compose(z0, z):
    """z0 o z = (t0 + t, x0 + x + t v0, v0 + v)"""
    _check_same_dim(z0, z)
    return KineticPoint(z0.t + z.t, z0.x + z.x + z.t * z0.v, z0.v + z.v)


def galilean_inverse(z):
    """(-t, -x + t v, -v), the two-sided inverse of z"""
    return KineticPoint(-z.t, -z.x + z.t * z.v, -z.v)


def kinetic_scale(r, z, s):
    """S_r(t, x, v) = (r^2s t, r^(1+2s) x, r v)"""
    if not r > 0:
        raise ValidationError(f"Scaling factor must be positive, got {r}")
    return KineticPoint(r ** (2.0 * s) * z.t, r ** (1.0 + 2.0 * s) * z.x, r * z.v)


def compose_nodes(z0, nodes):
    """z0 o z for every node, same arithmetic as galilean_compose"""
    if z0.d != nodes.d:
        raise ValidationError(f"Dimension mismatch: {z0.d} vs {nodes.d}")
    t = nodes.t[:, None]
    return NodeSet(z0.t + nodes.t, z0.x + nodes.x + t * z0.v, z0.v + nodes.v)


def scale_nodes(r, nodes, s):
    if not r > 0:
        raise ValidationError(f"Scaling factor must be positive, got {r}")
    return NodeSet(
        r ** (2.0 * s) * nodes.t, r ** (1.0 + 2.0 * s) * nodes.x, r * nodes.v
    )


class Cylinder:
    """Q_r(z0): -r^2s < t - t0 <= 0, |x - x0 - (t - t0) v0| < r^(1+2s), |v - v0| < r"""

    def __init__(self, center, radius, s):
        if not radius > 0:
            raise ValidationError(f"Cylinder radius must be positive, got {radius}")
        if not 0.0 < s < 1.0:
            raise ValidationError(f"Fractional order must lie in (0, 1), got {s}")
        self.center = center
        self.radius = float(radius)
        self.s = float(s)

    def __repr__(self):
        return f"Cylinder(center={self.center!r}, r={self.radius}, s={self.s})"

    @property
    def d(self):
        return self.center.d

    @property
    def time_extent(self):
        return self.radius ** (2.0 * self.s)

    @property
    def space_radius(self):
        return self.radius ** (1.0 + 2.0 * self.s)

    def contains(self, z):
        return bool(self.contains_nodes(z.as_nodes())[0])

    def contains_nodes(self, nodes):
        z0 = self.center
        dt = nodes.t - z0.t
        shear = nodes.x - z0.x - dt[:, None] * z0.v
        return (
            (dt > -self.time_extent)
            & (dt <= 0.0)
            & (np.linalg.norm(shear, axis=1) < self.space_radius)
            & (np.linalg.norm(nodes.v - z0.v, axis=1) < self.radius)
        )

    def volume(self):
        d = self.d
        return (
            self.time_extent
            * ball_volume(d) * self.space_radius**d
            * ball_volume(d) * self.radius**d
        )

    def bounding_box(self):
        """(t_lo, t_hi, sheared x half-width, v half-width) around the center"""
        z0 = self.center
        return z0.t - self.time_extent, z0.t, self.space_radius, self.radius

    def sample(self, n, seed=0):
        """n points of Q_r(z0), images of uniform samples of Q_1"""
        unit = unit_cylinder_samples(self.d, n, seed)
        return compose_nodes(self.center, scale_nodes(self.radius, unit, self.s))


def cylinder_contains(Q, z):
    return Q.contains(z)


class StackedCylinder:
    """Q^m: 0 < t - t0 < m r^2s, |x - x0 - (t - t0) v0| < (m + 2) r^(1+2s), |v - v0| < r"""

    def __init__(self, base, m):
        if int(m) != m or m < 1:
            raise ValidationError(f"Stacking factor must be a positive integer, got {m}")
        self.base = base
        self.m = int(m)

    def __repr__(self):
        return f"StackedCylinder(base={self.base!r}, m={self.m})"

    @property
    def d(self):
        return self.base.d

    @property
    def time_extent(self):
        return self.m * self.base.time_extent

    @property
    def space_radius(self):
        return (self.m + 2) * self.base.space_radius

    def contains(self, z):
        return bool(self.contains_nodes(z.as_nodes())[0])

    def contains_nodes(self, nodes):
        z0 = self.base.center
        dt = nodes.t - z0.t
        shear = nodes.x - z0.x - dt[:, None] * z0.v
        return (
            (dt > 0.0)
            & (dt < self.time_extent)
            & (np.linalg.norm(shear, axis=1) < self.space_radius)
            & (np.linalg.norm(nodes.v - z0.v, axis=1) < self.base.radius)
        )

    def volume(self):
        d = self.d
        return (
            self.time_extent
            * ball_volume(d) * self.space_radius**d
            * ball_volume(d) * self.base.radius**d
        )

    def bounding_box(self):
        t0 = self.base.center.t
        return t0, t0 + self.time_extent, self.space_radius, self.base.radius


def stacked_cylinder(Q, m):
    return StackedCylinder(Q, m)


def monte_carlo_volume(region, n=200_000, seed=0):
    """Hit-or-miss volume in sheared coordinates (the shear has unit Jacobian)"""
    rng = np.random.default_rng(seed)
    z0 = region.base.center if isinstance(region, StackedCylinder) else region.center
    t_lo, t_hi, x_half, v_half = region.bounding_box()
    d = z0.d
    t = rng.uniform(t_lo, t_hi, n)
    y = rng.uniform(-x_half, x_half, (n, d))
    v = z0.v + rng.uniform(-v_half, v_half, (n, d))
    x = z0.x + (t - z0.t)[:, None] * z0.v + y
    hits = np.count_nonzero(region.contains_nodes(NodeSet(t, x, v)))
    box = (t_hi - t_lo) * (2.0 * x_half) ** d * (2.0 * v_half) ** d
    return box * hits / n


class KineticMonomial:
    """c t^k0 x^a v^b with kinetic degree 2s k0 + (1 + 2s)|a| + |b|"""

    def __init__(self, coefficient, k0, a, b):
        a = tuple(int(e) for e in a)
        b = tuple(int(e) for e in b)
        if len(a) != len(b):
            raise ValidationError("Monomial x and v exponents must have equal length")
        if k0 < 0 or min(a + b, default=0) < 0:
            raise ValidationError("Monomial exponents must be nonnegative")
        self.coefficient = float(coefficient)
        self.k0 = int(k0)
        self.a = a
        self.b = b

    def __repr__(self):
        return f"KineticMonomial({self.coefficient}, {self.k0}, {self.a}, {self.b})"

    def degree(self, s):
        return 2.0 * s * self.k0 + (1.0 + 2.0 * s) * sum(self.a) + sum(self.b)

    def evaluate_nodes(self, nodes):
        out = self.coefficient * nodes.t**self.k0
        for i, e in enumerate(self.a):
            out = out * nodes.x[:, i] ** e
        for i, e in enumerate(self.b):
            out = out * nodes.v[:, i] ** e
        return out

    def __call__(self, z):
        return float(self.evaluate_nodes(z.as_nodes())[0])


def kinetic_degree(polynomial, s):
    """Largest kinetic degree over nonzero monomials; -inf for the zero polynomial"""
    degrees = [m.degree(s) for m in polynomial if m.coefficient != 0.0]
    return max(degrees) if degrees else -math.inf


def _multi_indices(d, total):
    for combo in itertools.product(range(total + 1), repeat=d):
        if sum(combo) <= total:
            yield combo


def monomial_basis(d, s, alpha):
    """Unit monomials of kinetic degree strictly below alpha, in a fixed order.

    A degree within 1e-12 of alpha counts as a tie and is excluded.
    """
    basis = []
    max_k0 = int(alpha / (2.0 * s)) + 1
    max_a = int(alpha / (1.0 + 2.0 * s)) + 1
    max_b = int(alpha) + 1
    for k0 in range(max_k0 + 1):
        for a in _multi_indices(d, max_a):
            for b in _multi_indices(d, max_b):
                m = KineticMonomial(1.0, k0, a, b)
                if m.degree(s) < alpha - DEGREE_TIE_TOLERANCE:
                    basis.append(m)
    basis.sort(key=lambda m: (m.degree(s), m.k0, m.a, m.b))
    return basis


def basis_matrix(basis, nodes):
    """Design matrix with one column per basis monomial"""
    if not basis:
        return np.empty((len(nodes), 0))
    return np.column_stack([m.evaluate_nodes(nodes) for m in basis])


def _ball_points(u, d):
    """Map uniform unit-cube points (n, d) into the open unit ball"""
    if d == 2:
        radius = np.sqrt(u[:, 0])
        angle = 2.0 * np.pi * u[:, 1]
        return radius[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    radius = np.cbrt(u[:, 0])
    cos_phi = 1.0 - 2.0 * u[:, 1]
    sin_phi = np.sqrt(np.maximum(0.0, 1.0 - cos_phi**2))
    azimuth = 2.0 * np.pi * u[:, 2]
    return radius[:, None] * np.column_stack(
        [sin_phi * np.cos(azimuth), sin_phi * np.sin(azimuth), cos_phi]
    )


def unit_cylinder_samples(d, n, seed=0, time_levels=None):
    """Scrambled Sobol points of Q_1 = (-1, 0] x B_1 x B_1.

    With time_levels = m the times are snapped to {0, -1/m, ..., -(m-1)/m}.
    """
    if n < 1:
        raise ValidationError(f"Need at least one node, got {n}")
    sampler = qmc.Sobol(d=1 + 2 * d, scramble=True, seed=seed)
    u = sampler.random_base2(int(math.ceil(math.log2(max(n, 2)))))[:n]
    t = -u[:, 0]
    if time_levels:
        t = -np.floor(u[:, 0] * time_levels) / time_levels
    x = _ball_points(u[:, 1 : 1 + d], d)
    v = _ball_points(u[:, 1 + d :], d)
    return NodeSet(t, x, v)


def extremal_nodes(d, time_levels=None):
    """Corners of Q_1 pulled inside by 1e-9: t in {0, -(1-delta)}, x, v in {0, +-(1-delta) e_i}"""
    edge = 1.0 - EXTREMAL_OFFSET
    times = [0.0, -edge]
    if time_levels:
        times = [0.0, -(time_levels - 1) / time_levels]
    axes = [np.zeros(d)]
    for i in range(d):
        for sign in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sign * edge
            axes.append(e)
    t, x, v = [], [], []
    for tt in times:
        for xx in axes:
            for vv in axes:
                t.append(tt)
                x.append(xx)
                v.append(vv)
    return NodeSet(np.array(t), np.array(x), np.array(v))


def reference_nodes(d, n, seed=0, time_levels=None):
    """Probe nodes of Q_1: Sobol samples followed by the extremal nodes"""
    sobol = unit_cylinder_samples(d, n, seed, time_levels)
    extra = extremal_nodes(d, time_levels)
    return NodeSet(
        np.concatenate([sobol.t, extra.t]),
        np.concatenate([sobol.x, extra.x]),
        np.concatenate([sobol.v, extra.v]),
    )
