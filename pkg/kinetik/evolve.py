"""Space-homogeneous Boltzmann stepping, trajectory fields and regularity/energy probes"""

import logging
import math

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from .collision import calibrate_cb, entropy_dissipation, q_carleman_grid
from .errors import StabilityError, ValidationError
from .fields import hs_seminorm, l2_norm
from .geometry import KineticPoint
from .holder import ProbePlan, TimeDomain, holder_seminorm
from .hydro import check_H, decay_constant, hydro_row, moments
from .kolmogorov import kolmogorov_exact

logger = logging.getLogger(__name__)


class DtPolicy:
    """Step size control: halve dt while the conservation drift exceeds the budget"""

    def __init__(self, dt, max_halvings=6, drift_budget=1e-4, safety=1e3, clip=True):
        if not dt > 0:
            raise ValidationError(f"evolve: time step must be positive, got {dt}")
        self.dt = float(dt)
        self.max_halvings = int(max_halvings)
        self.drift_budget = float(drift_budget)
        self.safety = float(safety)
        self.clip = bool(clip)

    def __repr__(self):
        return (
            f"DtPolicy(dt={self.dt}, max_halvings={self.max_halvings}, "
            f"drift_budget={self.drift_budget}, clip={self.clip})"
        )


class HomogeneousTrajectory:
    """Snapshots (t_i, f_i) with per-step diagnostics"""

    def __init__(self, model, policy):
        self.model = model
        self.policy = policy
        self.times = []
        self.snapshots = []
        self.diagnostics = []

    def add_snapshot(self, t, f):
        if self.times and t <= self.times[-1]:
            raise ValidationError("Snapshot times must increase strictly")
        self.times.append(float(t))
        self.snapshots.append(f)

    def __len__(self):
        return len(self.snapshots)

    def to_frame(self):
        return pd.DataFrame(self.diagnostics)

    def entropies(self):
        return np.array([row["entropy"] for row in self.diagnostics])

    def hydro_table(self, bounds=None, q=None, theta_literal=False):
        """Hydrodynamic series of the snapshots: t, rho, u, e, h, theta, N_q, margins"""
        rows = []
        for t, f in zip(self.times, self.snapshots):
            state = moments(f, theta_literal)
            check = check_H(state, bounds) if bounds is not None else None
            n_q = decay_constant(f, q) if q is not None else None
            rows.append(hydro_row(t, state, check, n_q))
        return pd.DataFrame(rows)


def _relative_drift(raw, state, dt):
    """dt times the raw moments of Q relative to the moments of f"""
    mass = max(state.rho, 1e-300)
    energy = max(state.energy, 1e-300)
    return {
        "mass": dt * abs(raw["mass"]) / mass,
        "momentum": dt * float(np.linalg.norm(raw["momentum"])) / math.sqrt(mass * energy),
        "energy": dt * abs(raw["energy"]) / energy,
    }


def _diagnostic_row(step, t, dt, f, drift, dissipation, clipped, rejected, decay_order):
    state = moments(f)
    row = {"step": step, "t": t, "dt": dt, "mass": state.rho}
    for name, value in zip(("momentum_x", "momentum_y", "momentum_z"), state.momentum):
        row[name] = float(value)
    row.update(
        energy=state.energy,
        entropy=state.entropy,
        entropy_dissipation=dissipation,
        drift_mass=drift["mass"],
        drift_momentum=drift["momentum"],
        drift_energy=drift["energy"],
        clipped_mass=clipped,
        rejected_steps=rejected,
    )
    if decay_order is not None:
        row["N_q"] = decay_constant(f, decay_order)
    return row


def evolve_homogeneous(f0, model, t_end, policy, c_b=None, save_every=1, decay_order=None,
                       metrics=None):
    """Explicit midpoint stepping of f_t = Q(f, f) with Q in Carleman form.

    Both stages use the conservation-projected Q; the unprojected drift of the
    second stage decides acceptance. Negative values are clipped (and the
    clipped mass recorded) or, with clip disabled, the step is retried.
    """
    if t_end < 0:
        raise ValidationError(f"evolve: end time must be nonnegative, got {t_end}")
    trajectory = HomogeneousTrajectory(model, policy)
    trajectory.add_snapshot(0.0, f0)
    zero_drift = {"mass": 0.0, "momentum": 0.0, "energy": 0.0}
    if f0.is_zero:
        trajectory.diagnostics.append(
            _diagnostic_row(0, 0.0, 0.0, f0, zero_drift, 0.0, 0.0, 0, decay_order)
        )
        if t_end > 0:
            trajectory.add_snapshot(t_end, f0)
        return trajectory
    if c_b is None:
        c_b = calibrate_cb(f0, model)
    ceiling = policy.safety * float(f0.values.max())
    cell = f0.grid.cell
    f = f0
    t, step = 0.0, 0
    trajectory.diagnostics.append(
        _diagnostic_row(0, 0.0, 0.0, f0, zero_drift, 0.0, 0.0, 0, decay_order)
    )
    while t < t_end - 1e-12 * max(1.0, t_end):
        state = moments(f)
        q1, _ = q_carleman_grid(f, model, c_b)
        dissipation = entropy_dissipation(f, q1)
        dt = min(policy.dt, t_end - t)
        rejected = 0
        while True:
            mid = np.maximum(f.values + 0.5 * dt * q1, 0.0)
            q2, raw = q_carleman_grid(f.with_values(mid), model, c_b)
            drift = _relative_drift(raw, state, dt)
            proposal = f.values + dt * q2
            negative = proposal < 0.0
            over_budget = max(drift.values()) > policy.drift_budget
            if not over_budget and (policy.clip or not np.any(negative)):
                break
            rejected += 1
            if rejected > policy.max_halvings:
                raise StabilityError(
                    f"evolve: step at t={t:.6g} rejected {rejected} times "
                    f"(drift {max(drift.values()):.3e})"
                )
            dt *= 0.5
            logger.debug(f"Step at t={t:.6g} rejected, retrying with dt={dt:.4g}")
        clipped = float(-np.sum(proposal[negative]) * cell)
        if clipped > 0.0:
            logger.warning(f"Clipped mass {clipped:.3e} at t={t + dt:.6g}")
        proposal = np.maximum(proposal, 0.0)
        if float(proposal.max()) > ceiling:
            raise StabilityError(
                f"evolve: solution diverged at t={t + dt:.6g} (max {proposal.max():.3e})"
            )
        f = f.with_values(proposal)
        t += dt
        step += 1
        row = _diagnostic_row(step, t, dt, f, drift, dissipation, clipped, rejected, decay_order)
        trajectory.diagnostics.append(row)
        if step % save_every == 0 or t >= t_end - 1e-12 * max(1.0, t_end):
            trajectory.add_snapshot(t, f)
        if metrics is not None:
            metrics.update_solver(step, t)
            metrics.update_conservation_drift(drift)
            metrics.update_entropy(row["entropy"])
            metrics.increment_evaluations("q_carleman", 2 * int(np.count_nonzero(f.values)))
        logger.debug(f"Step {step}: t={t:.6g} dt={dt:.4g} h={row['entropy']:.8g}")
    logger.info(f"Homogeneous run finished: {step} steps to t={t:.6g}")
    return trajectory


class TrajectoryField:
    """f(t, x, v) of a homogeneous trajectory, linear in t between snapshots"""

    def __init__(self, trajectory):
        self.times = np.asarray(trajectory.times)
        self.snapshots = trajectory.snapshots

    def evaluate_nodes(self, nodes):
        t = np.clip(nodes.t, self.times[0], self.times[-1])
        index = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1)
        out = np.empty(len(nodes))
        for i in np.unique(index):
            rows = index == i
            lo = self.snapshots[i].evaluate(nodes.v[rows])
            if i + 1 < len(self.times):
                hi = self.snapshots[i + 1].evaluate(nodes.v[rows])
                weight = (t[rows] - self.times[i]) / (self.times[i + 1] - self.times[i])
                out[rows] = (1.0 - weight) * lo + weight * hi
            else:
                out[rows] = lo
        return out


class KolmogorovFlow:
    """Exact fractional Kolmogorov solution evaluated on kinetic nodes, cached per time"""

    def __init__(self, f0, s):
        self.f0 = f0
        self.s = s
        self._cache = {}

    def at(self, t):
        if t < self.f0.t:
            raise ValidationError(f"Kolmogorov flow is defined for t >= {self.f0.t}, got {t}")
        if t not in self._cache:
            self._cache[t] = kolmogorov_exact(self.f0, t - self.f0.t, self.s)
        return self._cache[t]

    def evaluate_nodes(self, nodes):
        out = np.empty(len(nodes))
        for t in np.unique(nodes.t):
            rows = nodes.t == t
            out[rows] = self.at(float(t)).evaluate(nodes.x[rows], nodes.v[rows])
        return out


class HolderProbeResult:
    def __init__(self, frame, slope, bounded):
        self.frame = frame
        self.slope = slope
        self.bounded = bounded

    def summary(self):
        return {
            "slope": self.slope,
            "bounded": self.bounded,
            "max_ratio": float(self.frame["ratio"].max()) if len(self.frame) else 0.0,
        }


def holder_decay_probe(flow, alpha, times, radii, s, centers=None, nodes=128, seed=0,
                       time_levels=4, tau=None, bound=None):
    """Seminorm of flow on cylinders ending at each time of a ladder.

    Nodes below t = 0 are dropped. The log-log slope of seminorm against t is
    fitted over positive times; bounded reports whether seminorm / sup stays
    below bound (or finite) for t >= tau.
    """
    d = 2 if centers is None else centers[0][0].size
    if centers is None:
        centers = [(np.zeros(d), np.zeros(d))]
    domain = TimeDomain(0.0)
    rows = []
    for t in times:
        points = [KineticPoint(t, x, v) for x, v in centers]
        plan = ProbePlan(points, radii, s, nodes=nodes, seed=seed, time_levels=time_levels)
        seminorm = holder_seminorm(flow, domain, alpha, plan).seminorm
        sup = holder_seminorm(flow, domain, 0.0, plan).seminorm
        rows.append(
            {
                "t": float(t),
                "seminorm": seminorm,
                "sup": sup,
                "ratio": seminorm / sup if sup > 0.0 else 0.0,
            }
        )
        logger.info(f"Holder probe t={t:g}: seminorm={seminorm:.6g} sup={sup:.6g}")
    frame = pd.DataFrame(rows)
    positive = (frame["t"] > 0.0) & (frame["seminorm"] > 0.0)
    slope = float("nan")
    if np.count_nonzero(positive) >= 2:
        slope = float(
            np.polyfit(np.log(frame["t"][positive]), np.log(frame["seminorm"][positive]), 1)[0]
        )
    late = frame["t"] >= (tau if tau is not None else 0.0)
    ratios = frame["ratio"][late]
    bounded = bool(np.all(np.isfinite(ratios)))
    if bound is not None:
        bounded = bounded and bool(np.all(ratios <= bound))
    return HolderProbeResult(frame, slope, bounded)


def energy_dissipation_probe(trajectory, s, allowance=None):
    """sup |f|^2 + int |f|_Hs^2 against |f0|^2 + C t, C fitted when not given"""
    times = np.asarray(trajectory.times)
    l2 = np.array([l2_norm(f) ** 2 for f in trajectory.snapshots])
    hs = np.array([hs_seminorm(f, s) ** 2 for f in trajectory.snapshots])
    accumulated = cumulative_trapezoid(hs, times, initial=0.0) if len(times) > 1 else np.zeros(1)
    running_sup = np.maximum.accumulate(l2)
    excess = running_sup + accumulated - l2[0]
    if allowance is None:
        positive = times > 0.0
        allowance = float(np.max(np.maximum(excess[positive], 0.0) / times[positive])) if np.any(positive) else 0.0
    margin = l2[0] + allowance * times - (running_sup + accumulated)
    frame = pd.DataFrame(
        {
            "t": times,
            "l2_squared": l2,
            "hs_squared": hs,
            "hs_accumulated": accumulated,
            "sup_l2_squared": running_sup,
            "margin": margin,
        }
    )
    return frame, allowance
