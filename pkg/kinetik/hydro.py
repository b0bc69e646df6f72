"""Hydrodynamic densities, the (H) hypothesis check and pointwise decay constants"""

import logging
import math

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import curve_fit
from scipy.special import xlogy

from .errors import ValidationError
from .quadrature import sphere_measure

logger = logging.getLogger(__name__)

ENVELOPE_FAMILIES = ("propagation", "hard", "soft")


class HydroState:
    """Mass, momentum, energy, entropy and temperature of one velocity distribution"""

    def __init__(self, rho, momentum, energy, entropy, temperature):
        self.rho = float(rho)
        self.momentum = np.asarray(momentum, dtype=float)
        self.energy = float(energy)
        self.entropy = float(entropy)
        self.temperature = float(temperature)

    def __repr__(self):
        return (
            f"HydroState(rho={self.rho:.6g}, u={np.round(self.velocity, 6).tolist()}, "
            f"e={self.energy:.6g}, h={self.entropy:.6g}, theta={self.temperature:.6g})"
        )

    @property
    def velocity(self):
        if self.rho == 0.0:
            return np.zeros_like(self.momentum)
        return self.momentum / self.rho

    def as_dict(self):
        row = {"rho": self.rho}
        for name, value in zip(("ux", "uy", "uz"), self.velocity):
            row[name] = float(value)
        row.update(e=self.energy, h=self.entropy, theta=self.temperature)
        return row


class HydroBounds:
    def __init__(self, m0, M0, E0, H0):
        if not 0.0 < m0 <= M0:
            raise ValidationError(f"Bounds need 0 < m0 <= M0, got m0={m0}, M0={M0}")
        if E0 <= 0.0 or H0 <= 0.0:
            raise ValidationError("Bounds E0 and H0 must be positive")
        self.m0 = float(m0)
        self.M0 = float(M0)
        self.E0 = float(E0)
        self.H0 = float(H0)

    def __repr__(self):
        return f"HydroBounds(m0={self.m0}, M0={self.M0}, E0={self.E0}, H0={self.H0})"


class HydroCheck:
    """Signed margins of m0 <= rho <= M0, e <= E0, h <= H0; negative means violated"""

    def __init__(self, margins):
        self.margins = margins

    @property
    def passed(self):
        return {name: margin >= 0.0 for name, margin in self.margins.items()}

    @property
    def all_passed(self):
        return all(self.passed.values())

    def __repr__(self):
        return f"HydroCheck({self.margins})"


def _tail_integral(f, power, radius, log_weight=False):
    """|S^(d-1)| int_radius^inf C (1 + r)^-q r^power dr, optionally times log of the tail"""
    c, q = f.tail_c, f.tail_q

    def integrand(r):
        value = c * (1.0 + r) ** (-q) * r**power
        if log_weight:
            value *= math.log(c) - q * math.log1p(r)
        return value

    value, _ = quad(integrand, radius, np.inf)
    return sphere_measure(f.d) * value


def _corner_sums(f, radius):
    """Grid sums of the tail model over box nodes with |v| >= radius"""
    v = f.grid.points
    speed = np.linalg.norm(v, axis=-1)
    corner = speed >= radius
    tail = f.tail(v[corner])
    cell = f.grid.cell
    return (
        float(np.sum(tail) * cell),
        float(np.sum(tail * speed[corner] ** 2) * cell),
        float(np.sum(xlogy(tail, tail)) * cell),
    )


def moments(f, theta_literal=False):
    """Hydrodynamic densities of f by grid sums plus the tail outside the box.

    The closed-form tail runs from radius L; its share inside the box corners
    is taken back out by the same grid sum that covers f there.
    theta uses the 1/d normalization; theta_literal selects the fixed 1/3 factor.
    """
    d, grid = f.d, f.grid
    if f.has_tail and f.tail_q <= d + 2:
        raise ValidationError(
            f"Tail exponent {f.tail_q:.3f} too slow for finite energy (needs > {d + 2})"
        )
    v = grid.points
    cell = grid.cell
    values = f.values
    rho = float(np.sum(values) * cell)
    momentum = np.tensordot(values, v, axes=d) * cell
    energy = float(np.sum(values * np.sum(v**2, axis=-1)) * cell)
    entropy = float(np.sum(xlogy(values, values)) * cell)
    if f.has_tail:
        radius = grid.L
        corner_mass, corner_energy, corner_entropy = _corner_sums(f, radius)
        rho += _tail_integral(f, d - 1, radius) - corner_mass
        energy += _tail_integral(f, d + 1, radius) - corner_energy
        entropy += _tail_integral(f, d - 1, radius, log_weight=True) - corner_entropy
    factor = 1.0 / 3.0 if theta_literal else 1.0 / d
    if rho > 0.0:
        temperature = factor * (energy / rho - float(momentum @ momentum) / rho**2)
    else:
        logger.warning("Temperature undefined for a vacuum field (rho = 0)")
        temperature = float("nan")
    return HydroState(rho, momentum, energy, entropy, temperature)


def check_H(state, bounds):
    margins = {
        "mass_lower": state.rho - bounds.m0,
        "mass_upper": bounds.M0 - state.rho,
        "energy": bounds.E0 - state.energy,
        "entropy": bounds.H0 - state.entropy,
    }
    report = HydroCheck(margins)
    if not report.all_passed:
        failed = [name for name, ok in report.passed.items() if not ok]
        logger.warning(f"Hypothesis (H) violated: {', '.join(failed)}")
    return report


class DecayProfile:
    """Decay constants N_r = sup (1 + |v|)^r f(v) for a list of orders r"""

    def __init__(self, orders, constants):
        self.orders = [float(r) for r in orders]
        self.constants = [float(n) for n in constants]

    def __getitem__(self, r):
        return self.constants[self.orders.index(float(r))]

    def pairs(self):
        return list(zip(self.orders, self.constants))

    def __repr__(self):
        return f"DecayProfile({self.pairs()})"


def decay_constant(f, r):
    """sup of (1 + |v|)^r f over grid nodes and the tail model"""
    if r < 0:
        raise ValidationError(f"Decay order must be nonnegative, got {r}")
    weight = (1.0 + np.linalg.norm(f.grid.points, axis=-1)) ** r
    value = float(np.max(weight * f.values))
    if f.has_tail:
        if r > f.tail_q:
            raise ValidationError(
                f"(1 + |v|)^{r} f is unbounded for tail exponent {f.tail_q:.3f}"
            )
        value = max(value, f.tail_c * (1.0 + f.grid.L) ** (r - f.tail_q))
    return value


def decay_profile(f, orders):
    return DecayProfile(orders, [decay_constant(f, r) for r in orders])


def soft_potential_order(d, gamma, s):
    """Decay order d + 1 + d gamma / (2s) generated for moderately soft potentials"""
    return d + 1 + d * gamma / (2.0 * s)


def soft_generation_exponent(d, s):
    """Time exponent d / (2s) of the soft-potential generation barrier"""
    return d / (2.0 * s)


def _fit_soft(t, log_n, model, q):
    """c0 of c0 (1 + t^-d/(2s)) by least squares on log N with the exponent fixed"""
    if not -2.0 * model.s <= model.gamma <= 0.0:
        logger.warning(f"gamma = {model.gamma} outside [-2s, 0]; soft envelope may not apply")
    order = soft_potential_order(model.d, model.gamma, model.s)
    if q > order:
        logger.warning(f"Decay order {q} exceeds the generated order {order:.4g}")
    beta = soft_generation_exponent(model.d, model.s)
    if not len(t):
        raise RuntimeError("no positive times")
    profile = np.log1p(t ** (-beta))
    log_c0 = float(np.mean(log_n - profile))
    residual = float(np.max(np.abs(log_c0 + profile - log_n)))
    return log_c0, beta, residual


def _generation(t, log_c0, beta):
    return log_c0 + np.log1p(t ** (-beta))


class EnvelopeFit:
    """Per-snapshot N(t) and the fitted barrier amplitude A(t)"""

    def __init__(self, times, constants, family, c0, beta, residual):
        self.times = np.asarray(times, dtype=float)
        self.constants = np.asarray(constants, dtype=float)
        self.family = family
        self.c0 = float(c0)
        self.beta = float(beta)
        self.residual = float(residual)

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "propagation":
            return np.full_like(t, self.c0)
        with np.errstate(divide="ignore"):
            return self.c0 * (1.0 + t ** (-self.beta))

    def barrier(self, t, v, q):
        """U(t, v) = A(t) (1 + |v|)^-q"""
        return self.amplitude(t) * (1.0 + np.linalg.norm(v, axis=-1)) ** (-q)

    def __repr__(self):
        return (
            f"EnvelopeFit(family={self.family}, c0={self.c0:.6g}, beta={self.beta:.4g}, "
            f"residual={self.residual:.3e})"
        )


def _fit_hard(t, log_n):
    """c0 and beta of c0 (1 + t^-beta) by nonlinear least squares on log N"""
    if len(t) < 3:
        raise RuntimeError("fewer than three positive times")
    (log_c0, beta), _ = curve_fit(_generation, t, log_n, p0=(log_n.min(), 0.5))
    residual = float(np.max(np.abs(_generation(t, log_c0, beta) - log_n)))
    return log_c0, beta, residual


def envelope_fit(trajectory, q, times=None, family="hard", model=None):
    """Minimal N(t) with f(t) <= N(t) (1 + |v|)^-q, fitted by a barrier family on log N.

    The soft family fixes the time exponent at d / (2s) from model and fits c0 only.
    """
    if q < 0:
        raise ValidationError(f"Decay order must be nonnegative, got {q}")
    if family not in ENVELOPE_FAMILIES:
        raise ValidationError(f"Unknown envelope family: {family}")
    if family == "soft" and model is None:
        raise ValidationError("Envelope family soft needs the collision model")
    fields = list(trajectory)
    times = np.arange(len(fields), dtype=float) if times is None else np.asarray(times, dtype=float)
    constants = np.array([decay_constant(f, q) for f in fields])
    if not len(constants):
        return EnvelopeFit(times, constants, "propagation", 0.0, 0.0, 0.0)
    positive = constants > 0.0
    if not np.any(positive):
        return EnvelopeFit(times, constants, "propagation", 0.0, 0.0, 0.0)
    log_n = np.log(constants[positive])
    t_pos = times[positive]
    if family != "propagation":
        usable = t_pos > 0.0
        try:
            if family == "soft":
                log_c0, beta, residual = _fit_soft(t_pos[usable], log_n[usable], model, q)
            else:
                log_c0, beta, residual = _fit_hard(t_pos[usable], log_n[usable])
            return EnvelopeFit(times, constants, family, math.exp(log_c0), beta, residual)
        except (RuntimeError, ValueError) as e:
            logger.warning(f"Envelope fit ({family}) failed: {e}; using propagation")
    log_c0 = float(np.mean(log_n))
    residual = float(np.max(np.abs(log_n - log_c0)))
    return EnvelopeFit(times, constants, "propagation", math.exp(log_c0), 0.0, residual)


def hydro_row(t, state, check=None, n_q=None):
    """One CSV row: t, rho, ux, uy[, uz], e, h, theta, N_q and the (H) margins"""
    row = {"t": float(t)}
    row.update(state.as_dict())
    row["N_q"] = float("nan") if n_q is None else float(n_q)
    if check is not None:
        for name, margin in check.margins.items():
            row[f"margin_{name}"] = float(margin)
    return row
