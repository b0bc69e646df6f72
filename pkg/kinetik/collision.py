"""Non-cutoff Boltzmann collision operator in sigma and Carleman form"""

import logging
import math

import numpy as np
from scipy.integrate import quad

from .errors import QuadratureError, ValidationError
from .kernels import KernelFunction
from .parallel import parallel_map
from .quadrature import (
    QuadratureSettings,
    canonical_directions,
    composite_gauss_legendre,
    graded_panels,
    half_sphere_directions,
    jacobi_rule,
    plane_basis,
    radial_rule,
    sphere_directions,
    sphere_measure,
    subsphere_nodes,
)

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-12
ABSOLUTE_FLOOR = 1e-300
# below this angle the cancellation integrand is replaced by its grazing limit
GRAZING_CUTOFF = 1e-6


class CollisionModel:
    """B(r, cos theta) = r^gamma b(cos theta), b = |sin(theta/2)|^(-(d-1)-2s)"""

    def __init__(self, d, gamma, s, settings=None):
        if d not in (2, 3):
            raise ValidationError(f"Collision model needs d = 2 or 3, got {d}")
        if not gamma > -d:
            raise ValidationError(f"gamma must exceed -d = {-d}, got {gamma}")
        if gamma > 1.0:
            raise ValidationError(f"gamma must not exceed 1, got {gamma}")
        if not 0.0 < s < 1.0:
            raise ValidationError(f"s must lie in (0, 1), got {s}")
        self.d = int(d)
        self.gamma = float(gamma)
        self.s = float(s)
        self.settings = settings if settings is not None else QuadratureSettings()
        self.outside_regularity_range = not 0.0 <= self.gamma + 2.0 * self.s <= 2.0
        if self.outside_regularity_range:
            logger.warning(
                f"gamma + 2s = {self.gamma + 2.0 * self.s:.3f} lies outside [0, 2]"
            )

    def __repr__(self):
        return f"CollisionModel(d={self.d}, gamma={self.gamma}, s={self.s})"

    @property
    def singular_exponent(self):
        return -(self.d - 1) - 2.0 * self.s

    def angular_kernel(self, cos_theta):
        """b(cos) + b(-cos) on cos >= 0 and 0 below; Q is unchanged by this folding"""
        c = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
        sin_half = np.sqrt(0.5 * (1.0 - c))
        cos_half = np.sqrt(0.5 * (1.0 + c))
        p = self.singular_exponent
        with np.errstate(divide="ignore"):
            folded = sin_half**p + cos_half**p
        return np.where(c >= 0.0, folded, 0.0)

    def collision_kernel(self, r, cos_theta):
        return np.asarray(r, dtype=float) ** self.gamma * self.angular_kernel(cos_theta)

    def carleman_weight(self, rho, tau):
        """Weight of f(v + w), |w| = tau >= rho, in K_f(v, v + rho e).

        Equals 2^(d-1) rho^-1 B(r, cos theta) r^(2-d) with r^2 = rho^2 + tau^2,
        sin(theta/2) = rho / r and cos(theta/2) = tau / r.
        """
        d, p = self.d, self.singular_exponent
        r = np.hypot(rho, tau)
        return 2.0 ** (d - 1) / rho * r ** (self.gamma + 1 + 2.0 * self.s) * (
            rho**p + tau**p
        )


def _settings(model):
    if model is None:
        return QuadratureSettings()
    if isinstance(model, QuadratureSettings):
        return model
    return model.settings


def post_collisional(v, v_star, sigma):
    """(v', v'_*) = ((v + v_*)/2 +- |v - v_*| sigma / 2)"""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if abs(np.linalg.norm(sigma) - 1.0) > UNIT_TOLERANCE:
        raise ValidationError(f"sigma must be a unit vector, |sigma| = {np.linalg.norm(sigma)}")
    center = 0.5 * (v + v_star)
    half = 0.5 * np.linalg.norm(v - v_star)
    return center + half * sigma, center - half * sigma


def _plane_nodes(f, model, v_extent):
    """Radial nodes u >= 0 of the hyperplane integral, tau = rho + u"""
    settings = model.settings
    extent = v_extent + math.sqrt(model.d) * f.grid.L
    u, uw = composite_gauss_legendre(0.0, extent, settings.plane_panels, settings.plane_order)
    if not f.has_tail:
        return u, uw
    excess = f.tail_q - (model.gamma + 2.0 * model.s + model.d)
    if excess <= 0.0:
        raise QuadratureError(
            f"Tail exponent {f.tail_q:.3f} too slow for the hyperplane integral "
            f"(needs > gamma + 2s + d = {f.tail_q - excess:.3f})"
        )
    doublings = min(60, int(math.ceil(math.log2(1.0 / settings.tail_tolerance) / excess)))
    parts_u, parts_w = [u], [uw]
    lo = extent
    for _ in range(doublings):
        x, w = composite_gauss_legendre(lo, 2.0 * lo, 2, settings.plane_order)
        parts_u.append(x)
        parts_w.append(w)
        lo *= 2.0
    return np.concatenate(parts_u), np.concatenate(parts_w)


class BoltzmannKernel(KernelFunction):
    """Carleman kernel K_f(v, v') built from a density field.

    K_f(v, v + rho e) = integral over w perpendicular to e, |w| >= rho, of
    f(v + w) times the Carleman weight. The direction e is canonicalized
    before the plane basis is built, so K(v, v + w) and K(v, v - w) use the
    same nodes and agree bit for bit.
    """

    provenance = "boltzmann"
    symmetric = True

    def __init__(self, f, model):
        super().__init__(model.d, model.s)
        if f.d != model.d:
            raise ValidationError(f"Field dimension {f.d} does not match model d={model.d}")
        self.f = f
        self.model = model
        self._subsphere = subsphere_nodes(model.d, model.settings.plane_azimuths)

    def along(self, v, w):
        v, w = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(w, dtype=float))
        shape = v.shape[:-1]
        v = v.reshape(-1, self.d)
        w = w.reshape(-1, self.d)
        if self.f.is_zero:
            return np.zeros(shape)
        rho = np.linalg.norm(w, axis=1)
        if np.any(rho == 0.0):
            raise ValidationError("Carleman kernel is not defined on the diagonal")
        e = canonical_directions(w / rho[:, None])
        u, uw = _plane_nodes(self.f, self.model, float(np.max(np.linalg.norm(v, axis=1))))
        coeffs, cw = self._subsphere
        order = self.model.settings.order
        out = np.empty(len(v))
        chunk = self.model.settings.chunk
        for start in range(0, len(v), chunk):
            sl = slice(start, start + chunk)
            basis = plane_basis(e[sl])
            omega = np.einsum("kj,mjd->mkd", coeffs, basis)
            tau = rho[sl, None] + u[None, :]
            weight = self.model.carleman_weight(rho[sl, None], tau) * tau ** (self.d - 2) * uw
            points = v[sl, None, None, :] + tau[:, None, :, None] * omega[:, :, None, :]
            values = self.f.evaluate(points, order=order)
            out[sl] = np.einsum("mkn,mn,k->m", values, weight, cw)
        return out.reshape(shape)


def carleman_kernel(f, v, v_prime, model):
    """K_f(v, v') for a single pair"""
    v = np.asarray(v, dtype=float)
    v_prime = np.asarray(v_prime, dtype=float)
    if np.array_equal(v, v_prime):
        raise ValidationError("carleman_kernel needs v' != v")
    return float(BoltzmannKernel(f, model).along(v, v_prime - v))


def _q_sigma_sum(f, v, model, n_theta):
    settings = model.settings
    d, grid = model.d, f.grid
    stars = grid.points.reshape(-1, d)
    f_stars = f.values.ravel()
    keep = np.any(stars != v, axis=1)
    stars, f_stars = stars[keep], f_stars[keep]
    theta, tw = jacobi_rule(0.5 * math.pi, n_theta, 1.0 - 2.0 * model.s)
    coeffs, cw = subsphere_nodes(d, settings.plane_azimuths, half=True)
    angular = (
        model.angular_kernel(np.cos(theta)) * np.sin(theta) ** (d - 2) * tw
    )
    f_v = float(f.evaluate(v[None, :], order=settings.order)[0])
    cos_t = np.cos(theta)[None, :, None, None]
    sin_t = np.sin(theta)[None, :, None, None]
    total, scale = 0.0, 0.0
    for start in range(0, len(stars), settings.chunk):
        vs = stars[start : start + settings.chunk]
        fs = f_stars[start : start + settings.chunk]
        rel = v - vs
        r = np.linalg.norm(rel, axis=1)
        khat = rel / r[:, None]
        omega = np.einsum("kj,cjd->ckd", coeffs, plane_basis(khat))
        center = (0.5 * (v + vs))[:, None, None, :]
        half = (0.5 * r)[:, None, None, None]
        gain = 0.0
        for sign in (1.0, -1.0):
            sigma = cos_t * khat[:, None, None, :] + sign * sin_t * omega[:, None, :, :]
            f_prime = f.evaluate(center + half * sigma, order=settings.order)
            f_prime_star = f.evaluate(center - half * sigma, order=settings.order)
            gain = gain + f_prime * f_prime_star
        loss = 2.0 * f_v * fs[:, None, None]
        weight = r[:, None, None] ** model.gamma * angular[None, :, None] * cw[None, None, :]
        total += float(np.sum(weight * (gain - loss)))
        scale += float(np.sum(np.abs(weight) * (np.abs(gain) + np.abs(loss))))
    return total * grid.cell, scale * grid.cell


def q_sigma_terms(f, v, model):
    """Q(f, f)(v) in the sigma representation and the size of its gain plus loss parts.

    The v_* integral runs over grid nodes (v_* = v excluded), theta over
    (0, pi/2] with a Gauss-Jacobi rule absorbing the theta^(1 - 2s) behaviour
    left after pairing omega with -omega. With a convergence tolerance the
    theta rule is doubled and both values must agree relative to that size.
    """
    v = np.asarray(v, dtype=float)
    if f.is_zero:
        return 0.0, 0.0
    settings = model.settings
    value, scale = _q_sigma_sum(f, v, model, settings.theta_nodes)
    if settings.convergence_tolerance:
        refined, scale = _q_sigma_sum(f, v, model, 2 * settings.theta_nodes)
        if abs(refined - value) > settings.convergence_tolerance * max(scale, ABSOLUTE_FLOOR):
            raise QuadratureError(
                f"q_sigma at v={v.tolist()} did not converge: {value:.6e} vs {refined:.6e}"
            )
        value = refined
    return value, scale


def q_sigma(f, v, model):
    """Q(f, f)(v) by direct quadrature of the sigma representation"""
    return q_sigma_terms(f, v, model)[0]


def _local_derivatives(evalf, v, h):
    """Central-difference gradient and Hessian with step h"""
    d = v.size
    eye = np.eye(d) * h
    points = [v]
    for i in range(d):
        points += [v + eye[i], v - eye[i]]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        points += [
            v + eye[i] + eye[j],
            v + eye[i] - eye[j],
            v - eye[i] + eye[j],
            v - eye[i] - eye[j],
        ]
    values = evalf(np.array(points))
    f0 = values[0]
    grad = np.empty(d)
    hess = np.empty((d, d))
    for i in range(d):
        fp, fm = values[1 + 2 * i], values[2 + 2 * i]
        grad[i] = (fp - fm) / (2.0 * h)
        hess[i, i] = (fp - 2.0 * f0 + fm) / h**2
    base = 1 + 2 * d
    for k, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = values[base + 4 * k : base + 4 * k + 4]
        hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4.0 * h**2)
    return grad, hess


def odd_exponent(s):
    """Behaviour rho^beta of the odd part of a kernel moment rho^d (K(e) - K(-e)).

    Generic kernels give beta = -2s; for s >= 1/2 this is only integrable when
    the odd part is one order milder, which the cancellation condition demands.
    """
    return -2.0 * s if s < 0.5 else 1.0 - 2.0 * s


def apply_lk(K, f, v, model=None, rho_max=None, periodic=False):
    """Principal value of the integral of (f(v') - f(v)) K(v, v') dv'.

    Shells outside h_pv pair v + rho e with v - rho e; inside h_pv a second
    order Taylor expansion of f is integrated against K. Beyond rho_max the
    kernel's closed-form tail mass (if any) closes the integral, with f there
    replaced by its mean on periodic data and by 0 otherwise.
    """
    settings = _settings(model)
    v = np.asarray(v, dtype=float)
    if K.is_zero:
        return 0.0
    d, s = K.d, K.s
    h = f.grid.h
    h_pv = settings.h_pv or h
    if rho_max is None:
        if K.support_radius is not None:
            rho_max = K.support_radius
        else:
            rho_max = float(np.linalg.norm(v)) + math.sqrt(d) * f.grid.L

    def evalf(points):
        return f.evaluate(points, order=settings.order, periodic=periodic)

    f0 = float(evalf(v[None, :])[0])
    dirs, dw = half_sphere_directions(d, settings.directions)
    total = 0.0
    if rho_max > h_pv:
        rho, rw = graded_panels(
            h_pv, rho_max, settings.radial_order, max_width=settings.radial_max_panel
        )
        w_plus = rho[:, None, None] * dirs[None, :, :]
        k_plus = K.along(v, w_plus)
        k_minus = k_plus if K.symmetric else K.along(v, -w_plus)
        f_plus = evalf(v + w_plus)
        f_minus = evalf(v - w_plus)
        integrand = ((f_plus - f0) * k_plus + (f_minus - f0) * k_minus) * rho[:, None] ** (d - 1)
        total += float(np.einsum("rD,r,D->", integrand, rw, dw))
    inner = min(h_pv, rho_max)
    if inner > 0.0:
        grad, hess = _local_derivatives(evalf, v, h)
        curvature = np.einsum("Di,ij,Dj->D", dirs, hess, dirs)
        rho2, w2 = jacobi_rule(inner, settings.radial_inner_nodes, 1.0 - 2.0 * s)
        w_in = rho2[:, None, None] * dirs[None, :, :]
        k_plus = K.along(v, w_in)
        k_minus = k_plus if K.symmetric else K.along(v, -w_in)
        even = (k_plus + k_minus) * rho2[:, None] ** (d + 1)
        total += float(0.5 * np.einsum("rD,r,D,D->", even, w2, dw, curvature))
        if not K.symmetric:
            rho1, w1 = jacobi_rule(inner, settings.radial_inner_nodes, odd_exponent(s))
            w_in = rho1[:, None, None] * dirs[None, :, :]
            odd = (K.along(v, w_in) - K.along(v, -w_in)) * rho1[:, None] ** d
            total += float(np.einsum("rD,r,D,D->", odd, w1, dw, dirs @ grad))
    tail = K.tail_mass(v, rho_max)
    if tail:
        far = float(np.mean(f.values)) if periodic else 0.0
        total += (far - f0) * tail
    return total


def convolution_gamma(f, v, model):
    """(f * |.|^gamma)(v) by polar quadrature plus a closed tail beyond the box"""
    settings = model.settings
    d, gamma = model.d, model.gamma
    v = np.asarray(v, dtype=float)
    if f.has_tail and gamma >= f.tail_q - d:
        raise QuadratureError(
            f"Convolution with |w|^{gamma} diverges for tail exponent {f.tail_q:.3f}"
        )
    extent = float(np.linalg.norm(v)) + math.sqrt(d) * f.grid.L
    inner = min(f.grid.h, extent)
    panels = max(1, int(math.ceil((extent - inner) / settings.radial_max_panel)))
    beta = gamma + d - 1
    rho, rw = radial_rule(extent, inner, beta, settings.radial_inner_nodes, panels, settings.radial_order)
    dirs, dw = sphere_directions(d, settings.directions)
    values = f.evaluate(v + rho[:, None, None] * dirs[None, :, :], order=settings.order)
    total = float(np.einsum("rD,r,D->", values * rho[:, None] ** beta, rw, dw))
    if f.has_tail:
        c, q = f.tail_c, f.tail_q
        tail, _ = quad(lambda r: c * (1.0 + r) ** (-q) * r**beta, extent, np.inf)
        total += sphere_measure(d) * tail
    return total


def lower_order_term(f, v, model):
    """f(v) (f * |.|^gamma)(v); the constant c_b is applied by q_carleman"""
    v = np.asarray(v, dtype=float)
    f_v = float(f.evaluate(v[None, :], order=model.settings.order)[0])
    if f_v == 0.0:
        return 0.0
    return f_v * convolution_gamma(f, v, model)


def cancellation_integral(f, v, model):
    """Integral of K_f(v, v') - K_f(v', v) over v', computed directly.

    Pairing +-e leaves 2 f(v + w) - f(v + rho e + w) - f(v - rho e + w) under
    the hyperplane integral, which behaves like rho^(1 - 2s) at the origin.
    """
    settings = model.settings
    d = model.d
    v = np.asarray(v, dtype=float)
    if f.is_zero:
        return 0.0
    extent = float(np.linalg.norm(v)) + math.sqrt(d) * f.grid.L
    inner = min(f.grid.h, extent)
    panels = max(1, int(math.ceil((extent - inner) / settings.radial_max_panel)))
    rho, rw = radial_rule(
        extent, inner, 1.0 - 2.0 * model.s, settings.radial_inner_nodes, panels, settings.radial_order
    )
    u, uw = _plane_nodes(f, model, float(np.linalg.norm(v)))
    coeffs, cw = subsphere_nodes(d, settings.plane_azimuths)
    dirs, dw = half_sphere_directions(d, settings.directions)
    tau = rho[:, None] + u[None, :]
    weight = model.carleman_weight(rho[:, None], tau) * tau ** (d - 2) * uw
    total = 0.0
    for e, e_weight in zip(canonical_directions(dirs), dw):
        omega = coeffs @ plane_basis(e)
        base = v + tau[:, :, None, None] * omega[None, None, :, :]
        shift = rho[:, None, None, None] * e
        bracket = (
            2.0 * f.evaluate(base, order=settings.order)
            - f.evaluate(base + shift, order=settings.order)
            - f.evaluate(base - shift, order=settings.order)
        )
        radial = np.einsum("rnk,rn,k->r", bracket, weight, cw)
        total += e_weight * float(np.sum(rw * rho ** (d - 1) * radial))
    return total


def cancellation_ratio(f, v, model):
    """Estimate of c_b from the cancellation identity at v"""
    rhs = convolution_gamma(f, v, model)
    if rhs <= model.settings.floor:
        raise QuadratureError(f"Convolution {rhs:.3e} at v={np.asarray(v).tolist()} below floor")
    return cancellation_integral(f, v, model) / rhs


def cancellation_constant(model):
    """c_b = |S^(d-2)| int_0^(pi/2) sin^(d-2) b~ (cos^(-d-gamma)(theta/2) - 1) d theta"""
    d, gamma = model.d, model.gamma
    power = 1.0 - 2.0 * model.s
    p = model.singular_exponent
    grazing_limit = 2.0 ** (-p) * (d + gamma) / 8.0

    def integrand(theta):
        if theta < GRAZING_CUTOFF:
            return grazing_limit
        sin_half, cos_half = math.sin(0.5 * theta), math.cos(0.5 * theta)
        excess = math.expm1(-(d + gamma) * math.log(cos_half))
        folded = sin_half**p + cos_half**p
        return math.sin(theta) ** (d - 2) * folded * excess / theta**power

    value, _ = quad(integrand, 0.0, 0.5 * math.pi, weight="alg", wvar=(power, 0.0))
    return sphere_measure(d - 1) * value


def bulk_velocity(f):
    mass = float(np.sum(f.values))
    if mass == 0.0:
        return np.zeros(f.d)
    return np.tensordot(f.values, f.grid.points, axes=f.d) / mass


def calibrate_cb(f, model):
    """c_b from cancellation_ratio at the bulk velocity of f"""
    u = bulk_velocity(f)
    c_b = cancellation_ratio(f, u, model)
    logger.info(f"Calibrated c_b = {c_b:.8g} at u={np.round(u, 6).tolist()}")
    return c_b


def q_carleman(f, v, model, c_b=None, kernel=None):
    """Q(f, f)(v) = L_K f(v) + c_b f(v) (f * |.|^gamma)(v) with K = K_f"""
    if f.is_zero:
        return 0.0
    if c_b is None:
        c_b = calibrate_cb(f, model)
    K = kernel if kernel is not None else BoltzmannKernel(f, model)
    return apply_lk(K, f, v, model) + c_b * lower_order_term(f, v, model)


def grid_moments(grid, q):
    """Discrete mass, momentum and energy of grid values"""
    v = grid.points
    cell = grid.cell
    return {
        "mass": float(np.sum(q) * cell),
        "momentum": np.tensordot(q, v, axes=grid.d) * cell,
        "energy": float(np.sum(q * np.sum(v**2, axis=-1)) * cell),
    }


def conservation_projection(grid, q, mask=None):
    """Minimal l2 correction of q on mask making its mass, momentum and energy vanish"""
    q = np.array(q, dtype=float)
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    v = grid.points[mask]
    design = np.column_stack([np.ones(len(v)), v, np.sum(v**2, axis=1)])
    coeffs, *_ = np.linalg.lstsq(design, q[mask], rcond=None)
    q[mask] = q[mask] - design @ coeffs
    return q


def q_carleman_grid(f, model, c_b=None, floor=1e-12, project=True):
    """Q on every node with f > floor * max f, plus the raw conservation drift"""
    grid = f.grid
    q = np.zeros(grid.shape)
    peak = float(f.values.max())
    if peak == 0.0:
        return q, grid_moments(grid, q)
    if c_b is None:
        c_b = calibrate_cb(f, model)
    mask = f.values > floor * peak
    kernel = BoltzmannKernel(f, model)
    points = grid.points[mask]
    values = parallel_map(lambda v: q_carleman(f, v, model, c_b, kernel), points)
    q[mask] = values
    drift = grid_moments(grid, q)
    logger.debug(
        f"Q on {len(points)} nodes, raw drift mass={drift['mass']:.3e} "
        f"energy={drift['energy']:.3e}"
    )
    if project:
        q = conservation_projection(grid, q, mask)
    return q, drift


def entropy_dissipation(f, q_values):
    """-sum Q log f over nodes with f > 0; nonnegative for the exact operator"""
    positive = f.values > 0.0
    return -float(np.sum(q_values[positive] * np.log(f.values[positive])) * f.grid.cell)


def kf_comparison_integral(f, v, e, model):
    """Integral over w perpendicular to e of f(v + w) |w|^(gamma + 2s + 1)"""
    settings = model.settings
    d = model.d
    v = np.asarray(v, dtype=float)
    e = np.asarray(e, dtype=float)
    e = canonical_directions(e / np.linalg.norm(e))
    u_tail, uw_tail = _plane_nodes(f, model, float(np.linalg.norm(v)))
    extent = float(np.linalg.norm(v)) + math.sqrt(d) * f.grid.L
    power = model.gamma + 2.0 * model.s + 1.0
    beta = power + d - 2
    inner = min(f.grid.h, extent)
    tau, tw = radial_rule(
        extent, inner, beta, settings.radial_inner_nodes, settings.plane_panels, settings.plane_order
    )
    beyond = u_tail > extent
    tau = np.concatenate([tau, u_tail[beyond]])
    tw = np.concatenate([tw, uw_tail[beyond]])
    coeffs, cw = subsphere_nodes(d, settings.plane_azimuths)
    omega = coeffs @ plane_basis(e)
    values = f.evaluate(v + tau[:, None, None] * omega[None, :, :], order=settings.order)
    return float(np.einsum("nk,n,k->", values * tau[:, None] ** beta, tw, cw))
