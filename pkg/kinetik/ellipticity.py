"""Numerical certification of the ellipticity, symmetry and coercivity conditions of a kernel"""

import logging
import math

import numpy as np
import pandas as pd

from .collision import odd_exponent
from .errors import BudgetExceededError, ValidationError
from .fields import hs_norm, hs_seminorm, spectral_gradient, spectral_hessian
from .parallel import parallel_map
from .quadrature import (
    QuadratureSettings,
    ball_volume,
    half_sphere_directions,
    jacobi_rule,
    sphere_directions,
    sphere_measure,
)

logger = logging.getLogger(__name__)

DEFAULT_CONE_RADII = (0.1, 0.2, 0.4, 0.8)
NONDIVERGENCE_FLOOR = 1e-30
MAX_PAIRS = 5_000_000


def _radial_nodes(settings):
    return 2 * settings.radial_inner_nodes


def _settings(settings):
    return settings if settings is not None else QuadratureSettings()


def second_moment(K, v, r, settings=None):
    """Integral of K(v, v') |v - v'|^2 over the ball B_r(v)"""
    settings = _settings(settings)
    v = np.asarray(v, dtype=float)
    if K.is_zero:
        return 0.0
    d = K.d
    rho, rw = jacobi_rule(r, _radial_nodes(settings), 1.0 - 2.0 * K.s)
    dirs, dw = sphere_directions(d, settings.directions)
    values = K.along(v, rho[:, None, None] * dirs[None, :, :]) * rho[:, None] ** (d + 1)
    return float(np.einsum("rD,r,D->", values, rw, dw))


def avg_upper_bound(K, v, radii, settings=None):
    """Lambda(v) = max over radii of r^(2s-2) int_{B_r(v)} K(v, v') |v - v'|^2 dv'"""
    radii = [float(r) for r in radii]
    if not radii or min(radii) <= 0.0:
        raise ValidationError("avg_upper_bound needs positive radii")
    return max(r ** (2.0 * K.s - 2.0) * second_moment(K, v, r, settings) for r in radii)


class ConeEstimate:
    """Directional lower bounds and the estimated cone of nondegeneracy at one velocity"""

    def __init__(self, directions, weights, lambdas, threshold):
        self.directions = directions
        self.weights = weights
        self.lambdas = lambdas
        self.threshold = float(threshold)
        self.mask = (lambdas >= threshold) & (lambdas > 0.0)

    @property
    def lambda_hat(self):
        if not np.any(self.mask):
            return 0.0
        return float(self.lambdas[self.mask].min())

    @property
    def measure(self):
        """mu(v): measure of the cone, both signs counted"""
        return float(2.0 * np.sum(self.weights[self.mask]))

    @property
    def cone(self):
        """Directions of the cone, closed under e -> -e"""
        half = self.directions[self.mask]
        return np.concatenate([half, -half])

    def lambda_at_measure(self, fraction):
        """Largest lambda whose superlevel set covers fraction of the sphere"""
        order = np.argsort(-self.lambdas, kind="stable")
        covered = np.cumsum(2.0 * self.weights[order])
        target = fraction * sphere_measure(self.directions.shape[1])
        index = min(int(np.searchsorted(covered, target - 1e-12)), len(order) - 1)
        return float(self.lambdas[order][index])

    def __iter__(self):
        return iter((self.lambda_hat, self.cone, self.measure))


def cone_estimate(K, v, s=None, directions=None, radii=DEFAULT_CONE_RADII, fraction=0.5,
                  rule="max", settings=None):
    """(lambda, A, mu) at v from K(v, v + rho omega) rho^(d+2s) minimized over rho and +-omega.

    A direction enters the cone when its bound reaches fraction times the
    maximum (rule="max") or the median (rule="median") over the sphere.
    """
    settings = _settings(settings)
    if rule not in ("max", "median"):
        raise ValidationError(f"Unknown cone threshold rule: {rule}")
    s = K.s if s is None else s
    d = K.d
    v = np.asarray(v, dtype=float)
    dirs, dw = half_sphere_directions(d, directions or settings.directions)
    radii = np.asarray(radii, dtype=float)
    if K.is_zero:
        return ConeEstimate(dirs, dw, np.zeros(len(dirs)), 0.0)
    w = radii[:, None, None, None] * np.stack([dirs, -dirs])[None, :, :, :]
    scaled = K.along(v, w) * radii[:, None, None] ** (d + 2.0 * s)
    lambdas = scaled.min(axis=(0, 1))
    reference = lambdas.max() if rule == "max" else float(np.median(lambdas))
    return ConeEstimate(dirs, dw, lambdas, fraction * reference)


class CancellationResiduals:
    """c1 and c2 of the cancellation conditions, per radius and maximized"""

    def __init__(self, radii, c1_values, c2_values, s):
        self.radii = list(radii)
        self.c1_values = list(c1_values)
        self.c2_values = list(c2_values)
        self.c2_enforced = s >= 0.5

    @property
    def c1(self):
        return max(self.c1_values)

    @property
    def c2(self):
        return max(self.c2_values)

    def __iter__(self):
        return iter((self.c1, self.c2))


def _asymmetry(K, v, w):
    """K(v, v + w) - K(v + w, v)"""
    return K.along(v, w) - K.along(v + w, -w)


def cancellation_residuals(K, v, radii, s=None, literal=True, settings=None):
    """c1 = r^(2s) |int_{B_r} (K(v,v') - K(v',v))|, c2 = r^(2s-1) |int_{B_r} (...)(v - v')|"""
    settings = _settings(settings)
    s = K.s if s is None else s
    radii = [float(r) for r in radii]
    if not radii or min(radii) <= 0.0:
        raise ValidationError("Cancellation radii must be positive")
    if literal and max(radii) >= 1.0:
        raise ValidationError("Cancellation radii must lie in (0, 1)")
    v = np.asarray(v, dtype=float)
    d = K.d
    if K.is_zero:
        return CancellationResiduals(radii, [0.0] * len(radii), [0.0] * len(radii), s)
    count = settings.directions
    if d == 2:
        count = 4 * int(math.ceil(count / 4))
    dirs, dw = half_sphere_directions(d, count)
    n = _radial_nodes(settings)
    c1_values, c2_values = [], []
    for r in radii:
        rho, rw = jacobi_rule(r, n, 1.0 - 2.0 * s)
        w = rho[:, None, None] * dirs[None, :, :]
        even = (_asymmetry(K, v, w) + _asymmetry(K, v, -w)) * rho[:, None] ** (d - 1)
        c1 = abs(float(np.einsum("rD,r,D->", even, rw, dw)))
        rho, rw = jacobi_rule(r, n, odd_exponent(s))
        w = rho[:, None, None] * dirs[None, :, :]
        odd = (_asymmetry(K, v, w) - _asymmetry(K, v, -w)) * rho[:, None] ** d
        moment = -np.einsum("rD,r,D,Di->i", odd, rw, dw, dirs)
        c1_values.append(r ** (2.0 * s) * c1)
        c2_values.append(r ** (2.0 * s - 1.0) * float(np.linalg.norm(moment)))
    return CancellationResiduals(radii, c1_values, c2_values, s)


def nondivergence_residual(K, v, offsets, floor=NONDIVERGENCE_FLOOR):
    """max over w of |K(v, v+w) - K(v, v-w)| / (K(v, v+w) + K(v, v-w) + floor)"""
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    if len(offsets) == 0:
        return 0.0
    v = np.asarray(v, dtype=float)
    plus = K.along(v, offsets)
    minus = K.along(v, -offsets)
    return float(np.max(np.abs(plus - minus) / (plus + minus + floor)))


def _lattice_offsets(grid):
    """Minimal-image offsets v_j - v_i for all node pairs, shape (M, M, d)"""
    n = grid.n
    index = np.indices(grid.shape).reshape(grid.d, -1).T
    diff = index[None, :, :] - index[:, None, :]
    return ((diff + n // 2) % n - n // 2) * grid.h


def _pair_kernel(K, grid, max_pairs):
    pairs = (grid.n**grid.d) ** 2
    if pairs > max_pairs:
        raise BudgetExceededError(
            f"Double sum over {pairs} node pairs exceeds the budget of {int(max_pairs)}"
        )
    offsets = _lattice_offsets(grid)
    points = grid.points.reshape(-1, grid.d)
    diagonal = np.all(offsets == 0.0, axis=-1)
    safe = np.where(diagonal[..., None], grid.h, offsets)
    kernel = K.along(points[:, None, :], safe)
    return np.where(diagonal, 0.0, kernel)


def _diagonal_radius(grid):
    """Radius of the ball with the volume of one cell"""
    return grid.h / ball_volume(grid.d) ** (1.0 / grid.d)


def _shell_moments(K, grid, settings, power):
    """Per node and direction: int_0^r0 rho^power K(v, v + rho e) d rho"""
    settings = _settings(settings)
    r0 = _diagonal_radius(grid)
    beta = 1.0 - 2.0 * K.s if power > grid.d else odd_exponent(K.s)
    rho, rw = jacobi_rule(r0, _radial_nodes(settings), beta)
    dirs, dw = sphere_directions(grid.d, settings.directions)
    points = grid.points.reshape(-1, grid.d)
    w = rho[None, :, None, None] * dirs[None, None, :, :]
    values = K.along(points[:, None, None, :], w) * rho[None, :, None] ** power
    return np.einsum("mrD,r->mD", values, rw), dirs, dw


class CoercivityResult:
    def __init__(self, form, form_uncorrected, hs):
        self.form = float(form)
        self.form_uncorrected = float(form_uncorrected)
        self.hs = float(hs)

    @property
    def ratio(self):
        if self.hs == 0.0:
            return float("nan")
        return self.form / self.hs**2

    def __iter__(self):
        return iter((self.form, self.hs, self.ratio))

    def __repr__(self):
        return (
            f"CoercivityResult(form={self.form:.6g}, uncorrected={self.form_uncorrected:.6g}, "
            f"hs={self.hs:.6g}, ratio={self.ratio:.4g})"
        )


def coercivity_check(K, f, s=None, max_pairs=MAX_PAIRS, settings=None):
    """Double sum of |f(v') - f(v)|^2 K(v, v') on the periodic lattice against |f|_Hs^2.

    Pairs closer than one cell are excluded and replaced by the Taylor term
    (grad f . e)^2 integrated against rho^(d+1) K on the ball of cell volume.
    """
    s = K.s if s is None else s
    grid = f.grid
    cell = grid.cell
    values = f.values.ravel()
    if K.is_zero:
        return CoercivityResult(0.0, 0.0, hs_seminorm(f, s))
    kernel = _pair_kernel(K, grid, max_pairs)
    jumps = (values[None, :] - values[:, None]) ** 2
    uncorrected = float(np.sum(jumps * kernel)) * cell**2
    moments, dirs, dw = _shell_moments(K, grid, settings, grid.d + 1)
    gradient = spectral_gradient(f).reshape(-1, grid.d)
    slopes = (gradient @ dirs.T) ** 2
    correction = float(np.einsum("mD,mD,D->", slopes, moments, dw)) * cell
    result = CoercivityResult(uncorrected + correction, uncorrected, hs_seminorm(f, s))
    logger.debug(f"Coercivity on {grid}: {result}")
    return result


def hs_bilinear_check(K, f, g, s=None, max_pairs=MAX_PAIRS, settings=None):
    """(|<L_K f, g>|, |f|_Hs |g|_Hs, ratio) with L_K assembled on the periodic lattice"""
    s = K.s if s is None else s
    grid = f.grid
    if g.grid != grid:
        raise ValidationError("Bilinear check needs f and g on the same grid")
    cell = grid.cell
    fv = f.values.ravel()
    gv = g.values.ravel()
    if K.is_zero or not np.any(fv) or not np.any(gv):
        pairing = 0.0
    else:
        kernel = _pair_kernel(K, grid, max_pairs)
        lk = np.sum((fv[None, :] - fv[:, None]) * kernel, axis=1) * cell
        moments, dirs, dw = _shell_moments(K, grid, settings, grid.d + 1)
        hessian = spectral_hessian(f).reshape(-1, grid.d, grid.d)
        curvature = np.einsum("Di,mij,Dj->mD", dirs, hessian, dirs)
        lk = lk + 0.5 * np.einsum("mD,mD,D->m", curvature, moments, dw)
        if not K.symmetric:
            odd, dirs, dw = _shell_moments(K, grid, settings, grid.d)
            gradient = spectral_gradient(f).reshape(-1, grid.d)
            lk = lk + np.einsum("mD,mD,D->m", gradient @ dirs.T, odd, dw)
        pairing = float(np.sum(lk * gv)) * cell
    scale = hs_norm(f, s) * hs_norm(g, s)
    ratio = abs(pairing) / scale if scale > 0.0 else 0.0
    return abs(pairing), scale, ratio


def directional_lower_bound(K, v, radii, directions=None, settings=None):
    """min over (r, e) of r^(2s-2) int_{B_r(v)} ((v' - v) . e)_+^2 K(v, v') dv'"""
    settings = _settings(settings)
    v = np.asarray(v, dtype=float)
    if K.is_zero:
        return 0.0
    d = K.d
    if directions is None:
        directions, _ = sphere_directions(d, settings.directions)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    directions = directions / np.linalg.norm(directions, axis=1)[:, None]
    omega, ow = sphere_directions(d, settings.directions)
    projection = np.maximum(omega @ directions.T, 0.0) ** 2
    best = np.inf
    for r in radii:
        rho, rw = jacobi_rule(r, _radial_nodes(settings), 1.0 - 2.0 * K.s)
        values = K.along(v, rho[:, None, None] * omega[None, :, :]) * rho[:, None] ** (d + 1)
        per_direction = np.einsum("rD,r,D,De->e", values, rw, ow, projection)
        best = min(best, r ** (2.0 * K.s - 2.0) * float(per_direction.min()))
    return float(best)


def kernel_coefficient_modulus(K, pairs, alpha_prime, radii, settings=None):
    """max over (z1, z2, r) and rho of int_{B_rho} |K(z1, v1+w) - K(z2, v2+w)| |w|^2 dw / (rho^(2-2s) r^alpha')"""
    settings = _settings(settings)
    d = K.d
    dirs, dw = sphere_directions(d, settings.directions)
    best = 0.0
    for z1, z2, r in pairs:
        for rho_max in radii:
            rho, rw = jacobi_rule(rho_max, _radial_nodes(settings), 1.0 - 2.0 * K.s)
            w = rho[:, None, None] * dirs[None, :, :]
            k1 = K.along_at(z1.t, z1.x, z1.v, w)
            k2 = K.along_at(z2.t, z2.x, z2.v, w)
            total = np.einsum("rD,r,D->", np.abs(k1 - k2) * rho[:, None] ** (d + 1), rw, dw)
            value = float(total) / (rho_max ** (2.0 - 2.0 * K.s) * r**alpha_prime)
            best = max(best, value)
    return best


class EllipticityReport:
    """Per-probe constants of one kernel, checked against declared bounds"""

    COLUMNS = ("Lambda", "lambda", "mu", "c1", "c2", "nondivergence")

    def __init__(self, records, constants=None, gamma=None):
        self.records = records
        self.constants = constants or {}
        self.gamma = gamma

    def to_frame(self):
        rows = []
        for record in self.records:
            row = {f"v{i + 1}": float(c) for i, c in enumerate(record["v"])}
            row["speed"] = float(np.linalg.norm(record["v"]))
            row.update({key: record[key] for key in self.COLUMNS})
            row.update({f"pass_{k}": ok for k, ok in self.passes(record).items()})
            rows.append(row)
        return pd.DataFrame(rows)

    def passes(self, record):
        c = self.constants
        checks = {}
        if "lambda_min" in c:
            checks["lambda"] = record["lambda"] >= c["lambda_min"]
        if "Lambda_max" in c:
            checks["Lambda"] = record["Lambda"] <= c["Lambda_max"]
        if "mu_min" in c:
            checks["mu"] = record["mu"] >= c["mu_min"]
        if "c1_max" in c:
            checks["c1"] = record["c1"] <= c["c1_max"]
        if "c2_max" in c and record["c2_enforced"]:
            checks["c2"] = record["c2"] <= c["c2_max"]
        return checks

    @property
    def passed(self):
        return all(all(self.passes(r).values()) for r in self.records)

    def bands(self):
        """Min, max and max/min of lambda (1+|v|)^-(gamma+2s+1) and Lambda (1+|v|)^-(gamma+2s)"""
        if self.gamma is None or not self.records:
            return {}
        s = self.records[0]["s"]
        speed = np.array([np.linalg.norm(r["v"]) for r in self.records])
        out = {}
        for key, power in (("lambda", self.gamma + 2 * s + 1), ("Lambda", self.gamma + 2 * s)):
            scaled = np.array([r[key] for r in self.records]) * (1.0 + speed) ** (-power)
            lo, hi = float(scaled.min()), float(scaled.max())
            out[key] = {"min": lo, "max": hi, "ratio": hi / lo if lo > 0.0 else float("inf")}
        return out

    def summary(self):
        return {
            "probes": len(self.records),
            "passed": self.passed,
            "constants": self.constants,
            "bands": self.bands(),
            "max": {key: max((r[key] for r in self.records), default=0.0) for key in self.COLUMNS},
            "min": {key: min((r[key] for r in self.records), default=0.0) for key in self.COLUMNS},
        }


def probe_velocity(K, v, radii, cancellation_radii, settings=None, cone_fraction=0.5,
                   cone_rule="max", offsets=None):
    """All report quantities at one velocity"""
    v = np.asarray(v, dtype=float)
    cone = cone_estimate(K, v, fraction=cone_fraction, rule=cone_rule, settings=settings)
    residuals = cancellation_residuals(K, v, cancellation_radii, settings=settings)
    if offsets is None:
        offsets = np.asarray(radii, dtype=float)[:, None] * np.eye(K.d)[0]
    return {
        "v": v,
        "s": K.s,
        "Lambda": avg_upper_bound(K, v, radii, settings),
        "lambda": cone.lambda_hat,
        "mu": cone.measure,
        "c1": residuals.c1,
        "c2": residuals.c2,
        "c2_enforced": residuals.c2_enforced,
        "nondivergence": nondivergence_residual(K, v, offsets),
        "cone": cone,
    }


def ellipticity_report(K, velocities, radii, cancellation_radii=(0.25, 0.5, 0.75),
                       settings=None, constants=None, gamma=None, cone_fraction=0.5,
                       cone_rule="max"):
    """Probe every velocity in parallel and collect an EllipticityReport"""
    velocities = [np.asarray(v, dtype=float) for v in velocities]
    records = parallel_map(
        lambda v: probe_velocity(
            K, v, radii, cancellation_radii, settings, cone_fraction, cone_rule
        ),
        velocities,
    )
    logger.info(f"Ellipticity report on {len(records)} probe velocities")
    return EllipticityReport(records, constants, gamma)
