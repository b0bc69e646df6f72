"""Fractional Kolmogorov flow: exact spectral solution, splitting reference and linear kinetic steps"""

import logging
import math

import numpy as np

from .collision import apply_lk
from .ellipticity import avg_upper_bound
from .errors import StabilityError, ValidationError
from .fields import PhaseField, PhaseGrid
from .parallel import parallel_map
from .quadrature import QuadratureSettings, gauss_legendre

logger = logging.getLogger(__name__)

DAMPING_TOLERANCE = 1e-10
DAMPING_ORDER = 8
MAX_DAMPING_PANELS = 4096
STABILITY_FACTOR = 0.25
DEGENERATE_TOLERANCE = 1e-12

_K_AXES = "abc"
_V_AXES = "def"
_XI_AXES = "ghi"


def _check_order(s):
    if not 0.0 < s <= 1.0:
        raise ValidationError(f"Kolmogorov order must lie in (0, 1], got {s}")


def _x_fft(values, d):
    return np.fft.fftn(values, axes=tuple(range(d)))


def _x_ifft(values, d):
    return np.fft.ifftn(values, axes=tuple(range(d)))


def _mixed_vectors(grid):
    """k and xi vectors broadcast to shape (nx,)*d + (nv,)*d + (d,)"""
    d = grid.d
    axes = [grid.k_axis] * d + [grid.xi_axis] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh[:d], axis=-1), np.stack(mesh[d:], axis=-1)


def _v_transform(values, matrices, d):
    """Apply per-axis matrices M_a[k_a, xi_a, v_a] over the velocity axes"""
    ks, vs, out = _K_AXES[:d], _V_AXES[:d], _XI_AXES[:d]
    for a in range(d):
        current = ks + "".join(out[b] if b < a else vs[b] for b in range(d))
        target = ks + "".join(out[b] if b <= a else vs[b] for b in range(d))
        values = np.einsum(f"{current},{ks[a]}{out[a]}{vs[a]}->{target}", values, matrices[a])
    return values


def damping_integral(k, xi, t, s):
    """int_0^t |xi + sigma k|^(2s) d sigma for arrays of vectors k, xi of shape (..., d)"""
    _check_order(s)
    k = np.asarray(k, dtype=float)
    xi = np.asarray(xi, dtype=float)
    a = np.sum(k * k, axis=-1)
    b = np.sum(k * xi, axis=-1)
    c = np.sum(xi * xi, axis=-1)
    if t == 0.0:
        return np.zeros(np.broadcast_shapes(a.shape, c.shape))
    if s == 1.0:
        return c * t + b * t**2 + a * t**3 / 3.0
    if s == 0.5:
        return _half_order_damping(a, b, c, t)
    return _quadrature_damping(a, b, c, t, s)


def _half_order_damping(a, b, c, t):
    a, b, c = np.broadcast_arrays(a, b, c)
    out = np.sqrt(c) * t
    moving = a > 0.0
    disc = a * c - b * b
    degenerate = moving & (disc <= DEGENERATE_TOLERANCE * np.maximum(a * c, 1e-300))
    regular = moving & ~degenerate

    def primitive_regular(sigma, a, b, c, disc):
        u = a * sigma + b
        root = np.sqrt(a * sigma**2 + 2.0 * b * sigma + c)
        return u * root / (2.0 * a) + disc / (2.0 * a**1.5) * np.arcsinh(u / np.sqrt(disc))

    if np.any(regular):
        ar, br, cr, dr = a[regular], b[regular], c[regular], disc[regular]
        out[regular] = primitive_regular(t, ar, br, cr, dr) - primitive_regular(0.0, ar, br, cr, dr)
    if np.any(degenerate):
        ad, bd = a[degenerate], b[degenerate]

        def primitive(sigma):
            u = ad * sigma + bd
            return u * np.abs(u) / (2.0 * ad**1.5)

        out[degenerate] = primitive(t) - primitive(0.0)
    return out


def _quadrature_damping(a, b, c, t, s):
    a, b, c = np.broadcast_arrays(a, b, c)

    def integrate(panels):
        total = np.zeros(a.shape)
        edges = np.linspace(0.0, t, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes, weights = gauss_legendre(lo, hi, DAMPING_ORDER)
            for sigma, w in zip(nodes, weights):
                q = np.maximum(a * sigma**2 + 2.0 * b * sigma + c, 0.0)
                total += w * q**s
        return total

    panels = 4
    previous = integrate(panels)
    while panels < MAX_DAMPING_PANELS:
        panels *= 2
        current = integrate(panels)
        scale = max(1.0, float(np.max(np.abs(current))))
        if np.max(np.abs(current - previous)) <= DAMPING_TOLERANCE * scale:
            return current
        previous = current
    logger.warning(f"Damping quadrature stopped at {panels} panels before reaching tolerance")
    return previous


class KolmogorovState:
    """Spectral coefficients f^(k, xi) of a phase field (x-DFT, v-transform with cell weight)"""

    def __init__(self, grid, coefficients, t=0.0):
        self.grid = grid
        self.coefficients = coefficients
        self.t = float(t)

    @classmethod
    def from_field(cls, f):
        g = f.grid
        d = g.d
        coeffs = _x_fft(f.values, d)
        for a in range(d):
            coeffs = np.fft.fft(coeffs, axis=d + a) * g.hv
        phase = np.exp(1j * g.xi_axis * g.lv)
        for a in range(d):
            shape = [1] * (2 * d)
            shape[d + a] = g.nv
            coeffs = coeffs * phase.reshape(shape)
        return cls(g, coeffs, f.t)

    def mass(self):
        """Total mass, read from the (k, xi) = (0, 0) coefficient"""
        g = self.grid
        return float(np.real(self.coefficients[(0,) * (2 * g.d)])) * g.hx**g.d

    def hermitian_defect(self):
        """max |f^(k, xi) - conj f^(-k, -xi)|, zero for real fields"""
        c = self.coefficients
        flipped = np.conj(c)
        for axis in range(c.ndim):
            flipped = np.roll(np.flip(flipped, axis=axis), 1, axis=axis)
        return float(np.max(np.abs(c - flipped)))


def _forward_matrices(grid, t):
    """E[k, xi, v] = hv exp(-i (xi + t k) v), one per velocity axis"""
    shifted = grid.xi_axis[None, :] + t * grid.k_axis[:, None]
    return grid.hv * np.exp(-1j * shifted[:, :, None] * grid.v_axis[None, None, :])


def _inverse_matrices(grid):
    """G[k, v, xi] = (dxi / 2 pi) exp(i xi v), shared by every k"""
    dxi = 2.0 * math.pi / (grid.nv * grid.hv)
    inverse = dxi / (2.0 * math.pi) * np.exp(1j * grid.v_axis[:, None] * grid.xi_axis[None, :])
    return np.broadcast_to(inverse, (grid.nx,) + inverse.shape)


def kolmogorov_exact(f0, t, s):
    """Solution at f0.t + t of f_t + v . grad_x f = -(-Delta_v)^s f, periodic in x.

    On the spectral side f^(t, k, xi) = f^0(k, xi + t k) exp(-int_0^t |xi + sigma k|^2s);
    the shifted transform of f0 is taken exactly from its samples.
    """
    _check_order(s)
    if t < 0:
        raise ValidationError(f"Kolmogorov flow needs t >= 0, got {t}")
    grid = f0.grid
    if t == 0:
        return PhaseField(grid, f0.values.copy(), f0.t)
    d = grid.d
    spectrum = _x_fft(f0.values, d)
    forward = _forward_matrices(grid, t)
    spectrum = _v_transform(spectrum, [forward] * d, d)
    k, xi = _mixed_vectors(grid)
    spectrum = spectrum * np.exp(-damping_integral(k, xi, t, s))
    values = _v_transform(spectrum, [_inverse_matrices(grid)] * d, d)
    values = np.real(_x_ifft(values, d))
    return PhaseField(grid, values, f0.t + t)


def _transport(values, grid, dt):
    """Exact x-shift f(x - v dt, v) by phases exp(-i k . v dt)"""
    d = grid.d
    k_mesh = np.meshgrid(*([grid.k_axis] * d + [grid.v_axis] * d), indexing="ij")
    phase = np.zeros(grid.shape)
    for a in range(d):
        phase += k_mesh[a] * k_mesh[d + a]
    return np.real(_x_ifft(_x_fft(values, d) * np.exp(-1j * phase * dt), d))


def _heat(values, grid, dt, s):
    d = grid.d
    axes = tuple(range(d, 2 * d))
    xi = np.meshgrid(*([grid.xi_axis] * d), indexing="ij")
    multiplier = np.exp(-dt * sum(x**2 for x in xi) ** s)
    spectrum = np.fft.fftn(values, axes=axes) * multiplier
    return np.real(np.fft.ifftn(spectrum, axes=axes))


def kolmogorov_reference(f0, t, s, steps):
    """Strang splitting: half transport, fractional heat in v, half transport"""
    _check_order(s)
    if steps < 1:
        raise ValidationError("Splitting reference needs at least one step")
    grid = f0.grid
    dt = t / steps
    values = np.array(f0.values)
    for _ in range(steps):
        values = _transport(values, grid, 0.5 * dt)
        values = _heat(values, grid, dt, s)
        values = _transport(values, grid, 0.5 * dt)
    return PhaseField(grid, values, f0.t + t)


def stability_bound(grid, K, lam=None):
    """Largest explicit step 0.25 hv^2s / Lambda for the operator L_K"""
    if K.is_zero:
        return math.inf
    if lam is None:
        lam = avg_upper_bound(K, np.zeros(K.d), [1.0])
    if lam <= 0.0:
        return math.inf
    return STABILITY_FACTOR * grid.hv ** (2.0 * K.s) / lam


def _source_values(h, grid, t):
    if h is None:
        return 0.0
    if callable(h):
        d = grid.d
        mesh = grid.mesh()
        x = np.stack(mesh[:d], axis=-1)
        v = np.stack(mesh[d:], axis=-1)
        return np.asarray(h(x, v, t), dtype=float)
    return np.asarray(h, dtype=float)


def step_lin_kin(f, K, h, dt, lam=None, settings=None):
    """One explicit step of f_t + v . grad_x f = L_K f + h.

    L_K acts on each periodic velocity slice by principal-value quadrature,
    then transport is applied exactly in x-Fourier variables.
    """
    grid = f.grid
    bound = stability_bound(grid, K, lam)
    if dt > bound:
        raise StabilityError(f"Step {dt:.4g} exceeds the explicit stability bound {bound:.4g}")
    settings = settings if settings is not None else QuadratureSettings(interpolation="linear")
    values = np.array(f.values)
    update = _source_values(h, grid, f.t)
    if not K.is_zero:
        if grid.d < 2:
            raise ValidationError("Kernel stepping needs d = 2 or 3")
        lk = np.empty(grid.shape)
        v_nodes = grid.velocity_grid().points.reshape(-1, grid.d)
        for index in np.ndindex(*((grid.nx,) * grid.d)):
            slab = f.velocity_slice(index)
            column = parallel_map(
                lambda v: apply_lk(K, slab, v, settings, periodic=True), v_nodes
            )
            lk[index] = np.reshape(column, (grid.nv,) * grid.d)
        update = update + lk
    values = values + dt * update
    return PhaseField(grid, _transport(values, grid, dt), f.t + dt)


def kolmogorov_datum(grid, kind="rough", seed=0):
    """Initial phase fields: 'rough' is piecewise constant in v, 'smooth' is Gaussian"""
    d = grid.d
    mesh = grid.mesh()
    x, v = mesh[:d], mesh[d:]
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    modulation = 1.0 + 0.5 * np.cos(math.pi * x[0] / grid.lx + phase)
    if kind == "rough":
        profile = np.ones(grid.shape)
        for component in v:
            profile = profile * (np.abs(component) < 0.5 * grid.lv)
    elif kind == "smooth":
        profile = np.exp(-sum(c**2 for c in v))
    else:
        raise ValidationError(f"Unknown Kolmogorov datum: {kind}")
    return PhaseField(grid, modulation * profile, 0.0)


def phase_grid(d, nx, lx, nv, lv):
    return PhaseGrid(d, nx, lx, nv, lv)
