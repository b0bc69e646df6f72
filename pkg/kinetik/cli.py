"""Batch front-end: one subcommand per module, artifacts per run directory"""

import argparse
import glob
import json
import logging
import os
import sys
import time
from logging.handlers import RotatingFileHandler

import numpy as np
import pandas as pd
import yaml

from .changevar import DEFAULT_SWEEP, uniformity_sweep
from .collision import (
    BoltzmannKernel,
    apply_lk,
    cancellation_constant,
    cancellation_ratio,
    q_carleman,
)
from .config import Scenario
from .ellipticity import ellipticity_report
from .errors import NumericalBudgetError, ValidationError
from .evolve import (
    DtPolicy,
    KolmogorovFlow,
    energy_dissipation_probe,
    evolve_homogeneous,
    holder_decay_probe,
)
from .geometry import KineticPoint
from .holder import ProbePlan, holder_seminorm, weighted_holder_seminorm
from .hydro import check_H, decay_constant, decay_profile, envelope_fit, hydro_row, moments
from .kolmogorov import KolmogorovState, kolmogorov_datum, kolmogorov_reference, phase_grid
from .metrics import MetricsManager, ProgressMonitor
from .parallel import set_thread_limit
from .storage import ensure_dir, read_table, write_field, write_json, write_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_UNKNOWN = 64

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_MAX_BYTES = 10 * 1024 * 1024

DEFAULT_RADII = (0.25, 0.5, 1.0)
DEFAULT_BENCH_PAIRS = 1000


def setup_logging():
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, handlers=[logging.StreamHandler()])


def attach_log_file(out_dir):
    """Add a rotating kinetik.log in out_dir to the root logger"""
    handler = RotatingFileHandler(
        os.path.join(out_dir, "kinetik.log"), maxBytes=LOG_MAX_BYTES, backupCount=1
    )
    handler.setLevel(logging.INFO)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def _vectors(values, d):
    return [np.asarray(v, dtype=float).reshape(d) for v in values]


def _default_velocities(d):
    return [float(c) * np.eye(d)[0] for c in (0.0, 1.0, 2.0, 4.0)]


def _usable_decay_order(f, q):
    """q when N_q is finite for f, else None"""
    if q is None or (f.has_tail and q > f.tail_q):
        return None
    return float(q)


def run_kernel(scenario, args, out_dir, metrics):
    """K_f on the declared pairs, with mirror and reverse values, plus c_b estimates"""
    f = scenario.build_field()
    model = scenario.build_model()
    d = model.d
    probes = scenario.get_probes()
    K = BoltzmannKernel(f, model)
    pairs = probes.get("kernel_pairs", [])
    columns = [f"v{i + 1}" for i in range(d)] + [f"vp{i + 1}" for i in range(d)]
    rows = []
    if pairs:
        v = np.array([p[0] for p in pairs], dtype=float)
        v_prime = np.array([p[1] for p in pairs], dtype=float)
        forward = K(v, v_prime)
        mirror = K(v, 2.0 * v - v_prime)
        reverse = K(v_prime, v)
        for i in range(len(pairs)):
            row = dict(zip(columns, np.concatenate([v[i], v_prime[i]]).tolist()))
            row.update(
                K=float(forward[i]),
                K_mirror=float(mirror[i]),
                K_reverse=float(reverse[i]),
                mirror_defect=float(abs(forward[i] - mirror[i])),
            )
            rows.append(row)
        metrics.increment_evaluations("kernel", 3 * len(pairs))
    metrics.set_quadrature_nodes("plane", model.settings.node_count(d))
    write_table(os.path.join(out_dir, "kernel.csv"), pd.DataFrame(rows, columns=columns + [
        "K", "K_mirror", "K_reverse", "mirror_defect"]))

    velocities = _vectors(probes.get("velocities", [np.zeros(d)]), d)
    ratios = [cancellation_ratio(f, v, model) for v in velocities]
    write_table(
        os.path.join(out_dir, "cancellation.csv"),
        [dict(speed=float(np.linalg.norm(v)), c_b=r) for v, r in zip(velocities, ratios)],
    )
    spread = (max(ratios) - min(ratios)) / abs(np.mean(ratios)) if ratios else 0.0
    write_json(
        os.path.join(out_dir, "kernel.json"),
        {
            "pairs": len(pairs),
            "max_mirror_defect": max((r["mirror_defect"] for r in rows), default=0.0),
            "cancellation_ratios": ratios,
            "cancellation_spread": spread,
            "cancellation_constant": cancellation_constant(model),
        },
    )


def run_ellipticity(scenario, args, out_dir, metrics):
    f = scenario.build_field()
    model = scenario.build_model()
    probes = scenario.get_probes()
    K = BoltzmannKernel(f, model)
    velocities = _vectors(probes.get("velocities", _default_velocities(model.d)), model.d)
    report = ellipticity_report(
        K,
        velocities,
        probes.get("radii", DEFAULT_RADII),
        probes.get("cancellation_radii", (0.25, 0.5, 0.75)),
        settings=model.settings,
        constants=probes.get("constants"),
        gamma=model.gamma,
        cone_fraction=probes.get("cone_threshold", 0.5),
        cone_rule=probes.get("cone_rule", "max"),
    )
    metrics.set_quadrature_nodes("sphere", model.settings.directions)
    write_table(os.path.join(out_dir, "ellipticity.csv"), report.to_frame())
    write_json(os.path.join(out_dir, "ellipticity.json"), report.summary())
    if not report.passed:
        logger.warning("Ellipticity constants outside the declared bounds")


def run_changevar(scenario, args, out_dir, metrics):
    f = scenario.build_field()
    model = scenario.build_model()
    options = scenario.get_probes().get("changevar") or {}
    result = uniformity_sweep(
        f,
        options.get("v0_norms", DEFAULT_SWEEP),
        model,
        direction=options.get("direction"),
        radii=options.get("radii", DEFAULT_RADII),
        jacobian=options.get("jacobian", True),
    )
    write_table(os.path.join(out_dir, "changevar.csv"), result.frame)
    write_json(os.path.join(out_dir, "changevar.json"), result.summary())


def run_evolve(scenario, args, out_dir, metrics):
    """Homogeneous run with trajectory, hydro series, energy probe and decay envelope"""
    f0 = scenario.build_field()
    model = scenario.build_model()
    solver = scenario.get_solver()
    policy = DtPolicy(
        solver["dt"],
        max_halvings=solver["max_halvings"],
        drift_budget=solver["drift_budget"],
        clip=solver["clip"],
    )
    q = _usable_decay_order(f0, solver["decay_order"])
    if q is None:
        logger.warning(f"Decay order {solver['decay_order']} exceeds the tail of f0; N_q not tracked")
    monitor = ProgressMonitor(metrics, interval=solver.get("progress_interval", 30.0))
    monitor.start()
    try:
        trajectory = evolve_homogeneous(
            f0,
            model,
            solver["t_end"],
            policy,
            save_every=int(solver["save_every"]),
            decay_order=q,
            metrics=metrics,
        )
    finally:
        monitor.stop()

    write_table(os.path.join(out_dir, "trajectory.csv"), trajectory.to_frame())
    snapshots = ensure_dir(os.path.join(out_dir, "snapshots"))
    index = []
    for i, (t, f) in enumerate(zip(trajectory.times, trajectory.snapshots)):
        name = f"snapshot_{i:04d}.kfld"
        write_field(os.path.join(snapshots, name), f)
        index.append({"index": i, "t": t, "file": name})
    write_table(os.path.join(snapshots, "index.csv"), index)
    write_table(
        os.path.join(out_dir, "hydro.csv"),
        trajectory.hydro_table(scenario.build_bounds(), q, args.theta_literal_3),
    )
    energy, allowance = energy_dissipation_probe(trajectory, model.s, solver.get("allowance"))
    write_table(os.path.join(out_dir, "energy.csv"), energy)

    summary = {
        "steps": len(trajectory.diagnostics) - 1,
        "snapshots": len(trajectory),
        "t_end": trajectory.times[-1],
        "energy_allowance": allowance,
        "energy_margin_min": float(energy["margin"].min()),
    }
    entropies = trajectory.entropies()
    if len(entropies) > 1:
        summary["entropy_max_increase"] = float(max(np.max(np.diff(entropies)), 0.0))
    if q is not None:
        fit = envelope_fit(
            trajectory.snapshots, q, trajectory.times, solver["envelope"], model
        )
        summary["envelope"] = {
            "q": q,
            "family": fit.family,
            "c0": fit.c0,
            "beta": fit.beta,
            "residual": fit.residual,
            "growth": float(fit.constants.max() / fit.constants[0]) if fit.constants[0] > 0 else None,
        }
    write_json(os.path.join(out_dir, "evolve.json"), summary)


def run_kolmogorov(scenario, args, out_dir, metrics):
    """Exact fractional Kolmogorov flow from the declared datum, with the Holder probe"""
    options = scenario.get_kolmogorov()
    s = float(options["s"])
    grid = phase_grid(options["d"], options["nx"], options["lx"], options["nv"], options["lv"])
    f0 = kolmogorov_datum(grid, options["datum"], scenario.get_seed())
    flow = KolmogorovFlow(f0, s)
    times = sorted(float(t) for t in options["times"])
    alpha = options["alpha"] if options["alpha"] is not None else min(1.0, 2.0 * s) / 2.0
    zero = np.zeros(grid.d)
    probe = holder_decay_probe(
        flow,
        alpha,
        times,
        options.get("radii", (0.5, 0.25)),
        s,
        centers=[(zero, zero)],
        nodes=options.get("nodes", 128),
        seed=scenario.get_seed(),
        time_levels=options.get("time_levels", 4),
        tau=options.get("tau"),
        bound=options.get("bound"),
    )
    rows = []
    for t in times:
        state = flow.at(t)
        rows.append(
            {
                "t": t,
                "mass": state.mass(),
                "l2": state.l2_norm(),
                "hermitian_defect": KolmogorovState.from_field(state).hermitian_defect(),
            }
        )
    frame = pd.DataFrame(rows).merge(probe.frame, on="t")
    write_table(os.path.join(out_dir, "kolmogorov.csv"), frame)
    metrics.increment_evaluations("holder", len(times))

    summary = dict(probe.summary(), alpha=alpha, s=s, mass0=f0.mass())
    steps = options.get("reference_steps")
    if steps:
        t_end = times[-1]
        reference = kolmogorov_reference(f0, t_end, s, int(steps))
        summary["reference_max_error"] = float(
            np.max(np.abs(reference.values - flow.at(t_end).values))
        )
    write_json(os.path.join(out_dir, "kolmogorov.json"), summary)


def run_holder(scenario, args, out_dir, metrics):
    """Kinetic Holder seminorms of the scenario field on dyadic cylinders"""
    f = scenario.build_field()
    model = scenario.get_model()
    d = model["d"]
    options = scenario.get_probes().get("holder") or {}
    centers = [
        KineticPoint(0.0, np.zeros(d), v)
        for v in _vectors(options.get("centers", [np.zeros(d)]), d)
    ]
    plan = ProbePlan.dyadic(
        centers,
        int(options.get("levels", 4)),
        model["s"],
        nodes=int(options.get("nodes", 256)),
        seed=scenario.get_seed(),
    )
    rows = []
    for alpha in options.get("alphas", [0.0, 0.5]):
        estimate = holder_seminorm(f, None, alpha, plan)
        row = {
            "alpha": float(alpha),
            "seminorm": estimate.seminorm,
            "cylinders": estimate.cylinders_probed,
            "nodes": estimate.nodes_per_cylinder,
        }
        if options.get("q") is not None:
            row["weighted"] = weighted_holder_seminorm(f, None, alpha, options["q"], plan).seminorm
        rows.append(row)
        logger.info(f"Holder seminorm alpha={alpha}: {estimate.seminorm:.6g}")
    metrics.increment_evaluations("holder", len(rows) * len(plan.cylinders()))
    write_table(os.path.join(out_dir, "holder.csv"), rows)


def run_hydro(scenario, args, out_dir, metrics):
    f = scenario.build_field()
    state = moments(f, args.theta_literal_3)
    bounds = scenario.build_bounds()
    check = check_H(state, bounds) if bounds is not None else None
    q = _usable_decay_order(f, scenario.get_solver()["decay_order"])
    n_q = decay_constant(f, q) if q is not None else None
    write_table(os.path.join(out_dir, "hydro.csv"), [hydro_row(0.0, state, check, n_q)])
    orders = [r for r in scenario.get_probes().get("decay_orders", []) if _usable_decay_order(f, r) is not None]
    profile = decay_profile(f, orders)
    write_table(
        os.path.join(out_dir, "decay.csv"),
        pd.DataFrame(profile.pairs(), columns=["order", "N"]),
    )
    logger.info(f"Moments: {state!r}")


def run_bench(scenario, args, out_dir, metrics):
    """Timings of the kernel and Q quadratures; numeric checksums are seed-deterministic"""
    f = scenario.build_field()
    model = scenario.build_model()
    d = model.d
    probes = scenario.get_probes()
    rng = np.random.default_rng(scenario.get_seed())
    K = BoltzmannKernel(f, model)
    box = 0.5 * f.grid.L
    rows = []

    n_pairs = int(probes.get("bench_pairs", DEFAULT_BENCH_PAIRS))
    if n_pairs > 0:
        v = rng.uniform(-box, box, size=(n_pairs, d))
        w = rng.uniform(-box, box, size=(n_pairs, d))
        w[np.all(w == 0.0, axis=1)] = box
        start = time.perf_counter()
        values = K(v, v + w)
        elapsed = time.perf_counter() - start
        rows.append(_bench_row("carleman_kernel", n_pairs, model.settings.node_count(d), elapsed, values))
        metrics.increment_evaluations("kernel", n_pairs)

    n_velocities = int(probes.get("bench_velocities", 0))
    if n_velocities > 0:
        velocities = rng.uniform(-box, box, size=(n_velocities, d))
        for name, func in (
            ("apply_lk", lambda v: apply_lk(K, f, v, model)),
            ("q_carleman", lambda v: q_carleman(f, v, model, kernel=K)),
        ):
            start = time.perf_counter()
            values = np.array([func(v) for v in velocities])
            elapsed = time.perf_counter() - start
            rows.append(_bench_row(name, n_velocities, model.settings.node_count(d), elapsed, values))
        metrics.increment_evaluations("q_carleman", n_velocities)

    columns = ["kernel", "evaluations", "nodes_per_evaluation", "wall_seconds",
               "seconds_per_evaluation", "checksum"]
    write_table(os.path.join(out_dir, "bench.csv"), pd.DataFrame(rows, columns=columns))


def _bench_row(name, count, nodes, elapsed, values):
    logger.info(f"Bench {name}: {count} evaluations in {elapsed:.3f}s")
    return {
        "kernel": name,
        "evaluations": count,
        "nodes_per_evaluation": nodes,
        "wall_seconds": elapsed,
        "seconds_per_evaluation": elapsed / count,
        "checksum": float(np.sum(values)),
    }


def run_report(scenario, args, out_dir, metrics):
    """Merge every CSV below out_dir into summary.json and a long-format report.csv"""
    tables = sorted(
        path
        for path in glob.glob(os.path.join(out_dir, "**", "*.csv"), recursive=True)
        if os.path.basename(path) != "report.csv"
    )
    if not tables:
        raise ValidationError(f"cli: no CSV artifacts to report under {out_dir}")
    summary, rows = {}, []
    for path in tables:
        name = os.path.relpath(path, out_dir)
        frame = read_table(path)
        numeric = frame.select_dtypes(include="number")
        summary[name] = {"rows": len(frame), "columns": list(frame.columns)}
        for column in numeric.columns:
            series = numeric[column].dropna()
            if series.empty:
                continue
            stats = {"min": float(series.min()), "max": float(series.max()), "mean": float(series.mean())}
            rows.append(dict(table=name, column=column, **stats))
    documents = {}
    for path in sorted(glob.glob(os.path.join(out_dir, "**", "*.json"), recursive=True)):
        base = os.path.basename(path)
        if base in ("config.json", "summary.json"):
            continue
        with open(path) as handle:
            documents[os.path.relpath(path, out_dir)] = json.load(handle)
    write_table(os.path.join(out_dir, "report.csv"), pd.DataFrame(rows))
    write_json(os.path.join(out_dir, "summary.json"), {"tables": summary, "documents": documents})
    logger.info(f"Report over {len(tables)} tables written to {out_dir}")


def estimate_cost(scenario):
    """Dry-run node counts and predicted Q-evaluation count"""
    model = scenario.get_model()
    d = model["d"]
    settings = scenario.build_settings()
    field = scenario.config.get("field") or {}
    n = (field.get("grid") or {}).get("n", 0)
    solver = scenario.get_solver()
    steps = int(np.ceil(solver["t_end"] / solver["dt"])) if solver["dt"] > 0 else 0
    grid_nodes = n**d
    probes = scenario.get_probes()
    return {
        "grid_nodes": grid_nodes,
        "plane_nodes": settings.node_count(d),
        "sigma_nodes": settings.theta_nodes * settings.plane_azimuths,
        "directions": settings.directions,
        "kernel_probes": len(probes.get("kernel_pairs", [])),
        "evolve_steps": steps,
        "q_evaluations": 2 * steps * grid_nodes,
    }


def run_validate(args):
    """List every violated precondition and the dry-run cost; exit 2 when anything fails"""
    try:
        scenario = Scenario(args.config, seed=args.seed, strict=False)
    except (FileNotFoundError, ValueError, yaml.YAMLError) as e:
        print(f"cli: {e}")
        return EXIT_VALIDATION
    problems = scenario.diagnostics()
    for problem in problems:
        print(problem)
    if problems:
        logger.error(f"{len(problems)} problem(s) in {args.config}")
        return EXIT_VALIDATION
    for key, value in estimate_cost(scenario).items():
        print(f"cost: {key} = {value}")
    logger.info(f"{args.config} is valid")
    return EXIT_OK


COMMANDS = {
    "kernel": run_kernel,
    "ellipticity": run_ellipticity,
    "changevar": run_changevar,
    "evolve": run_evolve,
    "kolmogorov": run_kolmogorov,
    "holder": run_holder,
    "hydro": run_hydro,
    "report": run_report,
    "bench": run_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kinetik", description="Kinetik - numerical probes of non-cutoff Boltzmann regularity"
    )
    parser.add_argument("subcommand", help=f"One of: validate, {', '.join(COMMANDS)}")
    parser.add_argument("--config", default="config.yaml", help="Path to scenario file")
    parser.add_argument("--out", default=None, help="Artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    parser.add_argument("--threads", type=int, default=None, help="Cap worker threads")
    parser.add_argument(
        "--theta-literal-3",
        action="store_true",
        help="Temperature with the fixed 1/3 factor instead of 1/d",
    )
    return parser


def run(subcommand, args):
    """Dispatch one subcommand and map failures to exit codes"""
    if subcommand == "validate":
        return run_validate(args)
    command = COMMANDS.get(subcommand)
    if command is None:
        logger.error(f"Unknown subcommand: {subcommand}")
        return EXIT_UNKNOWN

    metrics = MetricsManager()
    out_dir, handler = None, None
    try:
        scenario = Scenario(args.config, seed=args.seed)
        base = scenario.get_output_dir()
        out_dir = ensure_dir(args.out or (base if subcommand == "report" else os.path.join(base, subcommand)))
        handler = attach_log_file(out_dir)
        logger.info(f"Loaded configuration from {args.config}")
        write_json(os.path.join(out_dir, "config.json"), scenario.resolved())
        command(scenario, args, out_dir, metrics)
        code = EXIT_OK
    except NumericalBudgetError as e:
        logger.error(f"Numerical budget exceeded: {e}")
        code = EXIT_BUDGET
    except (ValueError, FileNotFoundError, yaml.YAMLError) as e:
        logger.error(f"Validation failed: {e}")
        code = EXIT_VALIDATION
    finally:
        if out_dir is not None:
            metrics.write(os.path.join(out_dir, "metrics.prom"))
        if handler is not None:
            logging.getLogger().removeHandler(handler)
            handler.close()
    logger.info(f"{subcommand} finished with exit code {code}")
    return code


def main(argv=None):
    """Main entry point for kinetik"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()
    try:
        set_thread_limit(args.threads)
    except ValidationError as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    return run(args.subcommand, args)


if __name__ == "__main__":
    sys.exit(main())
