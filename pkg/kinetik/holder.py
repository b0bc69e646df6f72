"""Kinetic Holder seminorm estimation by minimax polynomial fits on probed cylinders"""

import logging

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

from .errors import ValidationError
from .geometry import (
    Cylinder,
    KineticPoint,
    basis_matrix,
    compose_nodes,
    monomial_basis,
    reference_nodes,
    scale_nodes,
)
from .parallel import parallel_map

logger = logging.getLogger(__name__)


class ProbePlan:
    """Declared finite family of cylinders Q_r(z0) and the reference nodes of Q_1"""

    def __init__(self, centers, radii, s, nodes=256, seed=0, time_levels=None):
        centers = list(centers)
        radii = [float(r) for r in radii]
        if not centers or not radii:
            raise ValidationError("Probe plan needs at least one center and one radius")
        if min(radii) <= 0:
            raise ValidationError("Probe radii must be positive")
        self.centers = centers
        self.radii = radii
        self.s = float(s)
        self.nodes = int(nodes)
        self.seed = int(seed)
        self.time_levels = time_levels
        self.reference = reference_nodes(centers[0].d, self.nodes, self.seed, time_levels)

    @classmethod
    def dyadic(cls, centers, levels, s, nodes=256, seed=0, time_levels=None, start=0):
        """Radii 2^-j for j = start .. start + levels - 1"""
        radii = [2.0 ** (-j) for j in range(start, start + levels)]
        return cls(centers, radii, s, nodes, seed, time_levels)

    @classmethod
    def sobol_centers(cls, d, count, t_range, x_half, v_half, levels, s, **kwargs):
        """Centers from a scrambled Sobol sequence over a box of phase space"""
        seed = kwargs.get("seed", 0)
        sampler = qmc.Sobol(d=1 + 2 * d, scramble=True, seed=seed + 1)
        u = sampler.random(count)
        lo = np.concatenate([[t_range[0]], -x_half * np.ones(d), -v_half * np.ones(d)])
        hi = np.concatenate([[t_range[1]], x_half * np.ones(d), v_half * np.ones(d)])
        points = qmc.scale(u, lo, hi) if count else np.empty((0, 1 + 2 * d))
        centers = [KineticPoint(p[0], p[1 : 1 + d], p[1 + d :]) for p in points]
        return cls.dyadic(centers, levels, s, **kwargs)

    def cylinders(self):
        """Probed cylinders in deterministic order (centers outer, radii inner)"""
        return [Cylinder(c, r, self.s) for c in self.centers for r in self.radii]


class HolderEstimate:
    """Result of a seminorm estimate over a probe plan"""

    def __init__(self, alpha, seminorm, cylinders_probed, worst_cylinder, nodes):
        self.alpha = alpha
        self.seminorm = seminorm
        self.cylinders_probed = cylinders_probed
        self.worst_cylinder = worst_cylinder
        self.nodes_per_cylinder = nodes

    def __repr__(self):
        return (
            f"HolderEstimate(alpha={self.alpha}, seminorm={self.seminorm:.6g}, "
            f"cylinders={self.cylinders_probed}, nodes={self.nodes_per_cylinder})"
        )


def minimax_residual(design, values):
    """min over c of max |values - design @ c|, solved as a linear program.

    The returned residual is recomputed from the fitted coefficients, so it is
    always attained by an actual polynomial.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    p = design.shape[1]
    if p == 0:
        return float(np.max(np.abs(values)))
    n = values.size
    ones = np.ones((n, 1))
    a_ub = np.vstack([np.hstack([design, -ones]), np.hstack([-design, -ones])])
    b_ub = np.concatenate([values, -values])
    cost = np.zeros(p + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * p + [(0.0, None)]
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if result.status == 0:
        coeffs = result.x[:p]
    else:
        logger.warning(f"Minimax LP failed ({result.message}), using least squares")
        coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(np.max(np.abs(values - design @ coeffs)))


def _evaluate(f, nodes):
    if hasattr(f, "evaluate_nodes"):
        return np.asarray(f.evaluate_nodes(nodes), dtype=float)
    return np.asarray(f(nodes), dtype=float)


def cylinder_seminorm(f, cylinder, alpha, reference, basis, domain=None):
    """inf_p sup |f - p| / r^alpha on one cylinder; None if too few nodes lie in D.

    The fit runs in Q_1 coordinates: polynomials of kinetic degree < alpha are
    invariant under z -> z0 o S_r z, so the fitted space is unchanged.
    """
    nodes = compose_nodes(
        cylinder.center, scale_nodes(cylinder.radius, reference, cylinder.s)
    )
    local = reference
    if domain is not None:
        mask = domain.contains_nodes(nodes)
        if np.count_nonzero(mask) <= len(basis):
            return None
        nodes = nodes.subset(mask)
        local = reference.subset(mask)
    values = _evaluate(f, nodes)
    residual = minimax_residual(basis_matrix(basis, local), values)
    return residual / cylinder.radius**alpha


def _check_alpha(alpha):
    if alpha < 0:
        raise ValidationError(f"Holder exponent must be nonnegative, got {alpha}")


def holder_seminorm(f, domain, alpha, probe_plan, weight=None):
    """Estimate [f] in the kinetic Holder space of order alpha over the probe plan.

    alpha = 0 gives the sup norm (empty basis). The value lower-bounds the
    continuum seminorm: only the declared cylinders and nodes are probed.
    """
    _check_alpha(alpha)
    if probe_plan is None:
        raise ValidationError("Empty probe plan")
    cylinders = probe_plan.cylinders()
    reference = probe_plan.reference
    basis = monomial_basis(reference.d, probe_plan.s, alpha)

    def probe(cylinder):
        value = cylinder_seminorm(f, cylinder, alpha, reference, basis, domain)
        if value is not None and weight is not None:
            value = value * weight(cylinder)
        return value

    values = parallel_map(probe, cylinders)
    best, worst, probed = 0.0, None, 0
    for cylinder, value in zip(cylinders, values):
        if value is None:
            continue
        probed += 1
        if worst is None or value > best:
            best, worst = value, cylinder
    if probed == 0:
        raise ValidationError("No probed cylinder intersects the domain")
    logger.debug(
        f"Holder alpha={alpha}: {best:.6g} over {probed} cylinders, basis {len(basis)}"
    )
    return HolderEstimate(alpha, best, probed, worst, len(reference))


def weighted_holder_seminorm(f, domain, alpha, q, probe_plan):
    """sup over probed cylinders of (1 + |v0|)^q times the local seminorm, radii in (0, 1]"""
    if q < 0:
        raise ValidationError(f"Decay weight must be nonnegative, got {q}")
    if max(probe_plan.radii) > 1.0:
        raise ValidationError("Weighted seminorm probes radii in (0, 1] only")

    def weight(cylinder):
        return (1.0 + np.linalg.norm(cylinder.center.v)) ** q

    return holder_seminorm(f, domain, alpha, probe_plan, weight=weight)


class TimeDomain:
    """Half space {t >= t_min}, used to keep probes inside a flow's time range"""

    def __init__(self, t_min=0.0, t_max=np.inf):
        self.t_min = t_min
        self.t_max = t_max

    def contains_nodes(self, nodes):
        return (nodes.t >= self.t_min) & (nodes.t <= self.t_max)
