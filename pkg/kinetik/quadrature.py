"""Shared quadrature tables: Gauss rules, sphere directions and plane bases"""

import math
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

from .errors import ValidationError

_SIGN_TOLERANCE = 1e-9


def sphere_measure(d):
    """Surface measure of the unit sphere S^{d-1} in R^d"""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def ball_volume(d):
    """Volume of the unit ball in R^d"""
    return math.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)


def gauss_legendre(a, b, order):
    """Gauss-Legendre nodes and weights on [a, b]"""
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss_legendre(a, b, panels, order):
    """Composite Gauss-Legendre rule with equal panels on [a, b]"""
    if b <= a:
        return np.empty(0), np.empty(0)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def jacobi_rule(length, n, beta):
    """Rule for integrals over (0, length) of g with g(rho) ~ rho^beta near 0.

    Returns nodes and effective weights so that sum(weights * g(nodes))
    approximates the integral; the algebraic factor is absorbed by the
    Gauss-Jacobi weight (1 + x)^beta.
    """
    if beta <= -1.0:
        raise ValidationError(f"Jacobi exponent must exceed -1, got {beta}")
    x, w = roots_jacobi(n, 0.0, beta)
    rho = 0.5 * length * (1.0 + x)
    return rho, 0.5 * length * w / (1.0 + x) ** beta


def radial_rule(rho_max, inner, beta, n_inner, panels, order):
    """Gauss-Jacobi on (0, inner] followed by composite Gauss-Legendre to rho_max"""
    if rho_max <= inner:
        return jacobi_rule(rho_max, n_inner, beta)
    r0, w0 = jacobi_rule(inner, n_inner, beta)
    r1, w1 = composite_gauss_legendre(inner, rho_max, panels, order)
    return np.concatenate([r0, r1]), np.concatenate([w0, w1])


def canonical_sign(vectors):
    """Sign making the first non-negligible component of each row positive"""
    vectors = np.asarray(vectors, dtype=float)
    significant = np.abs(vectors) > _SIGN_TOLERANCE
    first = np.argmax(significant, axis=-1)
    lead = np.take_along_axis(vectors, first[..., None], axis=-1)[..., 0]
    return np.where(lead < 0.0, -1.0, 1.0)


def canonical_directions(vectors):
    """Representative of each line {e, -e}, chosen consistently"""
    vectors = np.asarray(vectors, dtype=float)
    return vectors * canonical_sign(vectors)[..., None]


@lru_cache(maxsize=None)
def _geodesic_vertices(frequency):
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    base = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            base.extend([(0.0, a, b), (a, b, 0.0), (b, 0.0, a)])
    base = np.array(base)
    base /= np.linalg.norm(base, axis=1)[:, None]
    hull = ConvexHull(base)
    points = []
    for face in hull.simplices:
        a, b, c = base[face]
        for i in range(frequency + 1):
            for j in range(frequency + 1 - i):
                k = frequency - i - j
                points.append((i * a + j * b + k * c) / frequency)
    points = np.array(points)
    points /= np.linalg.norm(points, axis=1)[:, None]
    unique = np.unique(np.round(points, 12), axis=0)
    unique /= np.linalg.norm(unique, axis=1)[:, None]
    return unique


def sphere_directions(d, count):
    """Nearly equal-area directions on S^{d-1} with equal weights.

    d=2 uses count uniform angles offset by half a cell; d=3 uses the smallest
    geodesic refinement of the icosahedron with at least count vertices. Both
    sets are symmetric under e -> -e.
    """
    if d == 2:
        if count < 2 or count % 2:
            raise ValidationError(f"d=2 direction count must be even, got {count}")
        angles = (np.arange(count) + 0.5) * (2.0 * math.pi / count)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    elif d == 3:
        frequency = 1
        while 10 * frequency**2 + 2 < count:
            frequency += 1
        dirs = _geodesic_vertices(frequency).copy()
    else:
        raise ValidationError(f"Unsupported dimension: {d}")
    weights = np.full(len(dirs), sphere_measure(d) / len(dirs))
    return dirs, weights


def half_sphere_directions(d, count):
    """One representative per antipodal pair, weights of the full rule"""
    dirs, weights = sphere_directions(d, count)
    keep = canonical_sign(dirs) > 0.0
    return dirs[keep], weights[keep]


def plane_basis(e):
    """Orthonormal basis of the hyperplane orthogonal to each unit row e.

    Returns shape (..., d-1, d). The basis depends only on e, so equal
    directions always receive identical bases.
    """
    e = np.asarray(e, dtype=float)
    d = e.shape[-1]
    if d == 2:
        return np.stack([-e[..., 1], e[..., 0]], axis=-1)[..., None, :]
    if d == 3:
        axis = np.zeros_like(e)
        smallest = np.argmin(np.abs(e), axis=-1)
        np.put_along_axis(axis, smallest[..., None], 1.0, axis=-1)
        u = np.cross(e, axis)
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        w = np.cross(e, u)
        return np.stack([u, w], axis=-2)
    raise ValidationError(f"Unsupported dimension: {d}")


def subsphere_nodes(d, count, half=False):
    """Coefficients on S^{d-2} inside a hyperplane, with weights.

    For d=2 the subsphere is {+1, -1}; for d=3 it is a circle sampled at count
    offset angles. With half=True only one node of each antipodal pair is kept
    and the caller evaluates both signs.
    """
    if d == 2:
        if half:
            return np.array([[1.0]]), np.array([1.0])
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 3:
        if count < 2 or count % 2:
            raise ValidationError(f"Plane azimuth count must be even, got {count}")
        angles = (np.arange(count) + 0.5) * (2.0 * math.pi / count)
        coeffs = np.column_stack([np.cos(angles), np.sin(angles)])
        weights = np.full(count, 2.0 * math.pi / count)
        if half:
            return coeffs[: count // 2], weights[: count // 2]
        return coeffs, weights
    raise ValidationError(f"Unsupported dimension: {d}")


def graded_panels(a, b, order, ratio=2.0, max_width=0.5):
    """Composite Gauss-Legendre on [a, b] with geometrically growing panels.

    Panel edges grow by ratio starting from a, and no panel is wider than
    max_width; suited to integrands that decay algebraically away from a > 0.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    edges = [a]
    while edges[-1] < b:
        edges.append(min(b, max(edges[-1] * ratio, edges[-1] + 1e-12)))
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        panels = max(1, int(math.ceil((hi - lo) / max_width)))
        x, w = composite_gauss_legendre(lo, hi, panels, order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


class QuadratureSettings:
    """Node counts and tolerances shared by the collision and ellipticity quadratures"""

    DEFAULTS = {
        "interpolation": "cubic",
        "theta_nodes": 16,
        "plane_panels": 24,
        "plane_order": 8,
        "plane_azimuths": 16,
        "radial_inner_nodes": 8,
        "radial_order": 6,
        "radial_max_panel": 0.5,
        "directions": 32,
        "h_pv": None,
        "tail_tolerance": 1e-6,
        "chunk": 512,
        "convergence_tolerance": 1e-2,
        "floor": 1e-14,
    }

    def __init__(self, **overrides):
        unknown = set(overrides) - set(self.DEFAULTS)
        if unknown:
            raise ValidationError(f"Unknown quadrature settings: {sorted(unknown)}")
        values = dict(self.DEFAULTS)
        values.update({k: v for k, v in overrides.items() if v is not None})
        if values["interpolation"] not in ("linear", "cubic"):
            raise ValidationError(
                f"interpolation must be 'linear' or 'cubic', got {values['interpolation']}"
            )
        for key in (
            "theta_nodes",
            "plane_panels",
            "plane_order",
            "plane_azimuths",
            "radial_inner_nodes",
            "radial_order",
            "directions",
            "chunk",
        ):
            values[key] = int(values[key])
            if values[key] < 1:
                raise ValidationError(f"quadrature.{key} must be positive")
        self.__dict__.update(values)

    @property
    def order(self):
        """Spline order used for field interpolation"""
        return 3 if self.interpolation == "cubic" else 1

    def as_dict(self):
        """Settings as a plain dictionary"""
        return {key: getattr(self, key) for key in self.DEFAULTS}

    def refined(self, factor=2):
        """Copy with every node count multiplied by factor"""
        values = self.as_dict()
        for key in (
            "theta_nodes",
            "plane_panels",
            "plane_azimuths",
            "radial_inner_nodes",
            "directions",
        ):
            values[key] = values[key] * factor
        values["radial_max_panel"] = values["radial_max_panel"] / factor
        return QuadratureSettings(**values)

    def node_count(self, d):
        """Nodes of one hyperplane integral, used for cost estimates"""
        azimuths = 2 if d == 2 else self.plane_azimuths
        return self.plane_panels * self.plane_order * azimuths
