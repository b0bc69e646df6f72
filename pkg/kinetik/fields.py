"""Velocity distributions on truncated grids, closed-form fields and spectral tools"""

import logging
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import ValidationError

logger = logging.getLogger(__name__)

PERIODIZATION_FLOOR = 1e-8
TAIL_SHELL = 0.1


class VelocityGrid:
    """Uniform periodic lattice v_j = -L + j h, h = 2L/N, on [-L, L)^d"""

    def __init__(self, d, n, L):
        if d not in (2, 3):
            raise ValidationError(f"Velocity dimension must be 2 or 3, got {d}")
        if int(n) < 8:
            raise ValidationError(f"Grid needs at least 8 points per axis, got {n}")
        if not L > 0:
            raise ValidationError(f"Grid half-width must be positive, got {L}")
        self.d = int(d)
        self.n = int(n)
        self.L = float(L)
        self.h = 2.0 * self.L / self.n

    def __eq__(self, other):
        return (
            isinstance(other, VelocityGrid)
            and (self.d, self.n, self.L) == (other.d, other.n, other.L)
        )

    def __repr__(self):
        return f"VelocityGrid(d={self.d}, n={self.n}, L={self.L})"

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def cell(self):
        """Cell measure h^d"""
        return self.h**self.d

    @cached_property
    def axis(self):
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def points(self):
        """Node coordinates, shape (N,)*d + (d,), row-major"""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def frequencies(self):
        """Angular frequency lattice, shape (N,)*d + (d,)"""
        xi = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        mesh = np.meshgrid(*([xi] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def index_coordinates(self, v):
        """Fractional lattice indices of velocities v, shape (d, ...)"""
        v = np.asarray(v, dtype=float)
        return np.moveaxis((v + self.L) / self.h, -1, 0)

    def inside(self, v):
        """True where every component lies in [-L, L]"""
        return np.all(np.abs(np.asarray(v, dtype=float)) <= self.L, axis=-1)


class SampledField:
    """Signed samples on a velocity grid, periodic for spectral purposes"""

    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValidationError(
                f"Samples have shape {values.shape}, grid expects {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("Field samples must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def d(self):
        return self.grid.d

    @cached_property
    def _coefficients(self):
        return ndimage.spline_filter(self.values, order=3, mode="grid-wrap")

    def _interpolate(self, v, order):
        coords = self.grid.index_coordinates(v)
        if order == 3:
            return ndimage.map_coordinates(
                self._coefficients, coords, order=3, mode="grid-wrap", prefilter=False
            )
        return ndimage.map_coordinates(self.values, coords, order=1, mode="grid-wrap")

    def evaluate(self, v, order=1, periodic=True):
        """Interpolate at velocities v (shape (..., d)) on the periodic extension"""
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1, self.d)
        out = self._interpolate(flat, order)
        return out.reshape(v.shape[:-1])

    def evaluate_nodes(self, nodes):
        """Evaluate on kinetic nodes, ignoring t and x"""
        return self.evaluate(nodes.v)

    def spectrum(self):
        return SpectralField.from_field(self)


class DensityField(SampledField):
    """Nonnegative velocity distribution with an algebraic tail C (1 + |v|)^-q"""

    def __init__(self, grid, values, tail_c=0.0, tail_q=0.0, interpolation="linear"):
        values = np.asarray(values, dtype=float)
        if np.any(values < 0.0):
            raise ValidationError(
                f"Density samples must be nonnegative, minimum is {values.min():.3e}"
            )
        if tail_c < 0.0:
            raise ValidationError(f"Tail constant must be nonnegative, got {tail_c}")
        if interpolation not in ("linear", "cubic"):
            raise ValidationError(f"Unknown interpolation: {interpolation}")
        super().__init__(grid, values)
        self.tail_c = float(tail_c)
        self.tail_q = float(tail_q) if tail_c > 0.0 else 0.0
        self.interpolation = interpolation

    def __repr__(self):
        return (
            f"DensityField({self.grid!r}, max={self.values.max():.3e}, "
            f"tail=({self.tail_c:.3e}, {self.tail_q:.3f}))"
        )

    @property
    def has_tail(self):
        return self.tail_c > 0.0

    @property
    def is_zero(self):
        return not np.any(self.values) and not self.has_tail

    def tail(self, v):
        """Tail model at velocities v"""
        if not self.has_tail:
            return np.zeros(np.shape(v)[:-1])
        speed = np.linalg.norm(v, axis=-1)
        return self.tail_c * (1.0 + speed) ** (-self.tail_q)

    def evaluate(self, v, order=None, periodic=False):
        """Interpolated value inside [-L, L]^d, tail model outside; never negative"""
        if order is None:
            order = 3 if self.interpolation == "cubic" else 1
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1, self.d)
        if periodic:
            out = self._interpolate(flat, order)
        else:
            out = np.empty(len(flat))
            inside = self.grid.inside(flat)
            if np.any(inside):
                out[inside] = self._interpolate(flat[inside], order)
            if not np.all(inside):
                out[~inside] = self.tail(flat[~inside])
        return np.maximum(out, 0.0).reshape(v.shape[:-1])

    def scaled(self, factor):
        """The field factor * f, tail included"""
        if factor < 0:
            raise ValidationError(f"Scale factor must be nonnegative, got {factor}")
        return DensityField(
            self.grid,
            self.values * factor,
            self.tail_c * factor,
            self.tail_q,
            self.interpolation,
        )

    def with_values(self, values):
        """Same grid, tail and interpolation with new samples"""
        return DensityField(
            self.grid, values, self.tail_c, self.tail_q, self.interpolation
        )


def evaluate(f, v, order=None):
    """Evaluate a density field at v (module-level convenience)"""
    return f.evaluate(v, order=order)


def fit_tail(grid, values, shell=TAIL_SHELL):
    """Least-squares fit of log f = log C - q log(1 + |v|) on the outer radial shell"""
    speed = np.linalg.norm(grid.points, axis=-1)
    mask = (speed >= (1.0 - shell) * grid.L) & (speed <= grid.L) & (values > 0.0)
    if np.count_nonzero(mask) < 2:
        return 0.0, 0.0
    x = np.log1p(speed[mask])
    if np.ptp(x) == 0.0:
        return 0.0, 0.0
    design = np.column_stack([np.ones_like(x), -x])
    (log_c, q), *_ = np.linalg.lstsq(design, np.log(values[mask]), rcond=None)
    if q <= 0.0:
        logger.warning(f"Tail fit produced non-decaying exponent {q:.3f}, tail dropped")
        return 0.0, 0.0
    return float(np.exp(log_c)), float(q)


class AnalyticField:
    """Closed-form nonnegative velocity distribution"""

    def __call__(self, v):
        raise NotImplementedError

    def evaluate(self, v, order=None, periodic=False):
        return self(np.asarray(v, dtype=float))

    def evaluate_nodes(self, nodes):
        return self(nodes.v)

    def __add__(self, other):
        return FieldSum([self, other])


class Maxwellian(AnalyticField):
    """rho (2 pi T)^(-d/2) exp(-|v - u|^2 / (2T))"""

    def __init__(self, rho=1.0, u=(0.0, 0.0), temperature=1.0):
        if rho < 0 or temperature <= 0:
            raise ValidationError("Maxwellian needs rho >= 0 and T > 0")
        self.rho = float(rho)
        self.u = np.asarray(u, dtype=float)
        self.temperature = float(temperature)

    def __call__(self, v):
        d = self.u.size
        norm = self.rho * (2.0 * np.pi * self.temperature) ** (-d / 2.0)
        r2 = np.sum((np.asarray(v) - self.u) ** 2, axis=-1)
        return norm * np.exp(-r2 / (2.0 * self.temperature))


class AlgebraicDecay(AnalyticField):
    """C (1 + |v|)^-q"""

    def __init__(self, c=1.0, q=5.0):
        if c < 0:
            raise ValidationError("AlgebraicDecay needs C >= 0")
        self.c = float(c)
        self.q = float(q)

    def __call__(self, v):
        return self.c * (1.0 + np.linalg.norm(v, axis=-1)) ** (-self.q)


class SmoothBump(AnalyticField):
    """Compactly supported C-infinity bump of given radius and peak height"""

    def __init__(self, center=(0.0, 0.0), width=1.0, height=1.0):
        if width <= 0 or height < 0:
            raise ValidationError("SmoothBump needs width > 0 and height >= 0")
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.height = float(height)

    def __call__(self, v):
        r2 = np.sum((np.asarray(v) - self.center) ** 2, axis=-1) / self.width**2
        inside = r2 < 1.0
        out = np.zeros(np.shape(r2))
        out[inside] = self.height * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out


class ZeroField(AnalyticField):
    def __call__(self, v):
        return np.zeros(np.shape(v)[:-1])


class FieldSum(AnalyticField):
    """Pointwise sum of analytic fields"""

    def __init__(self, parts):
        self.parts = []
        for part in parts:
            self.parts.extend(part.parts if isinstance(part, FieldSum) else [part])

    def __call__(self, v):
        total = np.zeros(np.shape(v)[:-1])
        for part in self.parts:
            total = total + part(v)
        return total


def sample(field, grid, interpolation="linear", fit=True):
    """Sample an analytic field on a grid and fit the algebraic tail"""
    values = np.asarray(field(grid.points), dtype=float)
    if np.any(values < 0.0):
        raise ValidationError(
            f"Field evaluator returned negative values (min {values.min():.3e})"
        )
    tail_c, tail_q = fit_tail(grid, values) if fit else (0.0, 0.0)
    logger.debug(f"Sampled {type(field).__name__} on {grid}, tail=({tail_c}, {tail_q})")
    return DensityField(grid, values, tail_c, tail_q, interpolation)


class SpectralField:
    """DFT coefficients of grid samples (numpy convention, unnormalized forward).

    Parseval reads sum |f|^2 = N^-d sum |F|^2.
    """

    def __init__(self, grid, coefficients):
        self.grid = grid
        self.coefficients = coefficients

    @classmethod
    def from_field(cls, f):
        return cls(f.grid, np.fft.fftn(f.values))

    @property
    def xi(self):
        return self.grid.frequencies

    @property
    def xi_norm(self):
        return np.linalg.norm(self.grid.frequencies, axis=-1)

    def inverse(self):
        """Real samples reproduced from the coefficients"""
        return np.real(np.fft.ifftn(self.coefficients))

    def energy(self):
        return float(np.sum(np.abs(self.coefficients) ** 2)) / self.grid.n**self.grid.d


def _check_order(s, upper_inclusive=False):
    ok = 0.0 < s <= 1.0 if upper_inclusive else 0.0 < s < 1.0
    if not ok:
        raise ValidationError(f"Fractional order out of range: {s}")


def check_periodization(f, floor=PERIODIZATION_FLOOR):
    """Warn when boundary samples exceed floor * max|f|; returns True when clean"""
    values = np.abs(f.values)
    peak = values.max()
    if peak == 0.0:
        return True
    edge = 0.0
    for axis in range(f.d):
        edge = max(
            edge,
            np.take(values, 0, axis=axis).max(),
            np.take(values, -1, axis=axis).max(),
        )
    if edge > floor * peak:
        logger.warning(
            f"Periodization floor breached: boundary/max = {edge / peak:.3e} "
            f"exceeds {floor:.1e}"
        )
        return False
    return True


def hs_seminorm(f, s):
    """Homogeneous H^s seminorm on the periodic lattice.

    |f|^2 = h^d N^-d sum_xi |xi|^(2s) |F(xi)|^2, the lattice version of the
    integral of |xi|^(2s) |f^(xi)|^2 with the continuous transform.
    """
    _check_order(s, upper_inclusive=True)
    check_periodization(f)
    spec = SpectralField.from_field(f)
    weight = spec.xi_norm ** (2.0 * s)
    total = np.sum(weight * np.abs(spec.coefficients) ** 2)
    return float(np.sqrt(f.grid.cell * total / f.grid.n**f.d))


def l2_norm(f):
    return float(np.sqrt(f.grid.cell * np.sum(f.values**2)))


def hs_norm(f, s):
    """Inhomogeneous H^s norm (|f|_L2^2 + |f|_Hs^2)^(1/2)"""
    return float(np.hypot(l2_norm(f), hs_seminorm(f, s)))


def fractional_laplacian(f, s):
    """(-Delta)^s via the Fourier multiplier |xi|^(2s); s = 1 gives the spectral Laplacian"""
    _check_order(s, upper_inclusive=True)
    check_periodization(f)
    spec = SpectralField.from_field(f)
    return np.real(np.fft.ifftn(spec.xi_norm ** (2.0 * s) * spec.coefficients))


def spectral_gradient(f):
    """Gradient samples, shape (N,)*d + (d,)"""
    spec = SpectralField.from_field(f)
    xi = f.grid.frequencies
    return np.stack(
        [np.real(np.fft.ifftn(1j * xi[..., a] * spec.coefficients)) for a in range(f.d)],
        axis=-1,
    )


def spectral_hessian(f):
    """Hessian samples, shape (N,)*d + (d, d)"""
    spec = SpectralField.from_field(f)
    xi = f.grid.frequencies
    d = f.d
    out = np.empty(f.grid.shape + (d, d))
    for a in range(d):
        for b in range(a, d):
            block = np.real(np.fft.ifftn(-xi[..., a] * xi[..., b] * spec.coefficients))
            out[..., a, b] = block
            out[..., b, a] = block
    return out


class PhaseGrid:
    """Periodic x-box [-lx, lx)^d times v-box [-lv, lv)^d"""

    def __init__(self, d, nx, lx, nv, lv):
        if d not in (1, 2, 3):
            raise ValidationError(f"Phase-space dimension must be 1, 2 or 3, got {d}")
        if int(nx) < 1 or int(nv) < 4 or lx <= 0 or lv <= 0:
            raise ValidationError("Phase grid needs nx >= 1, nv >= 4 and positive boxes")
        self.d = int(d)
        self.nx = int(nx)
        self.lx = float(lx)
        self.nv = int(nv)
        self.lv = float(lv)
        self.hx = 2.0 * self.lx / self.nx
        self.hv = 2.0 * self.lv / self.nv

    def __repr__(self):
        return (
            f"PhaseGrid(d={self.d}, nx={self.nx}, lx={self.lx}, "
            f"nv={self.nv}, lv={self.lv})"
        )

    @property
    def shape(self):
        return (self.nx,) * self.d + (self.nv,) * self.d

    @cached_property
    def x_axis(self):
        return -self.lx + self.hx * np.arange(self.nx)

    @cached_property
    def v_axis(self):
        return -self.lv + self.hv * np.arange(self.nv)

    @cached_property
    def k_axis(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.hx)

    @cached_property
    def xi_axis(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.nv, d=self.hv)

    def mesh(self):
        """Coordinate arrays (x_1..x_d, v_1..v_d) broadcast to the full shape"""
        axes = [self.x_axis] * self.d + [self.v_axis] * self.d
        return np.meshgrid(*axes, indexing="ij")

    def velocity_grid(self):
        """The v-slice as a VelocityGrid (d >= 2)"""
        return VelocityGrid(self.d, self.nv, self.lv)

    @property
    def cell(self):
        return (self.hx * self.hv) ** self.d


class PhaseField:
    """Signed samples f(x, v) on a PhaseGrid, cubic spline in all coordinates"""

    def __init__(self, grid, values, t=0.0):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValidationError(
                f"Samples have shape {values.shape}, grid expects {grid.shape}"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.t = float(t)

    @cached_property
    def _coefficients(self):
        return ndimage.spline_filter(self.values, order=3, mode="grid-wrap")

    def evaluate(self, x, v):
        """Spline interpolation at positions x and velocities v, shape (..., d)"""
        g = self.grid
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        cx = np.moveaxis((x + g.lx) / g.hx, -1, 0).reshape(g.d, -1)
        cv = np.moveaxis((v + g.lv) / g.hv, -1, 0).reshape(g.d, -1)
        out = ndimage.map_coordinates(
            self._coefficients,
            np.concatenate([cx, cv]),
            order=3,
            mode="grid-wrap",
            prefilter=False,
        )
        return out.reshape(x.shape[:-1])

    def velocity_slice(self, index):
        """Samples f(x_index, .) as a SampledField"""
        return SampledField(self.grid.velocity_grid(), self.values[index])

    def mass(self):
        return float(np.sum(self.values) * self.grid.cell)

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell))
