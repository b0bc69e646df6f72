"""Prometheus run metrics and the background progress monitor"""

import logging
import threading
import time

from prometheus_client import CollectorRegistry, Gauge, generate_latest, write_to_textfile

logger = logging.getLogger(__name__)

QUADRATURE_KINDS = ("plane", "radial", "sigma", "sphere")
EVALUATION_KINDS = ("kernel", "q_carleman", "q_sigma", "holder")
DRIFT_QUANTITIES = ("mass", "momentum", "energy")


class MetricsManager:
    """Manager for Prometheus run metrics"""

    def __init__(self):
        self.registry = CollectorRegistry()

        self.run_uptime = Gauge(
            "kinetik_run_uptime_seconds",
            "Wall-clock time since the run started",
            registry=self.registry,
        )

        self.quadrature_nodes = Gauge(
            "kinetik_quadrature_nodes",
            "Nodes per quadrature of the given kind",
            ["kind"],
            registry=self.registry,
        )

        self.evaluations = Gauge(
            "kinetik_evaluations",
            "Number of evaluations performed",
            ["kind"],
            registry=self.registry,
        )

        self.solver_step = Gauge(
            "kinetik_solver_step",
            "Index of the last accepted solver step",
            registry=self.registry,
        )

        self.solver_time = Gauge(
            "kinetik_solver_time",
            "Simulated time reached by the solver",
            registry=self.registry,
        )

        self.conservation_drift = Gauge(
            "kinetik_conservation_drift",
            "Relative conservation drift of the last step",
            ["quantity"],
            registry=self.registry,
        )

        self.entropy = Gauge(
            "kinetik_entropy",
            "Entropy of the current solution",
            registry=self.registry,
        )

        for kind in QUADRATURE_KINDS:
            self.quadrature_nodes.labels(kind=kind).set(0)
        for kind in EVALUATION_KINDS:
            self.evaluations.labels(kind=kind).set(0)
        for quantity in DRIFT_QUANTITIES:
            self.conservation_drift.labels(quantity=quantity).set(0)

        self.start_time = time.time()

    def update_run_uptime(self):
        """Update run uptime metric"""
        self.run_uptime.set(time.time() - self.start_time)

    def set_quadrature_nodes(self, kind, count):
        self.quadrature_nodes.labels(kind=kind).set(count)

    def increment_evaluations(self, kind, count=1):
        """Add count to the evaluation counter of a kind"""
        current_value = self.evaluations.labels(kind=kind)._value.get()
        self.evaluations.labels(kind=kind).set(current_value + count)

    def update_solver(self, step, t):
        self.solver_step.set(step)
        self.solver_time.set(t)

    def update_conservation_drift(self, drifts):
        """Set the drift gauges from a {quantity: value} mapping"""
        for quantity, value in drifts.items():
            self.conservation_drift.labels(quantity=quantity).set(value)

    def update_entropy(self, value):
        self.entropy.set(value)

    def get_metrics(self):
        """Get current metrics in Prometheus format"""
        self.update_run_uptime()
        return generate_latest(self.registry)

    def write(self, path):
        """Write the exposition text to path"""
        self.update_run_uptime()
        write_to_textfile(path, self.registry)
        logger.debug(f"Metrics written to {path}")


class ProgressMonitor:
    """Background thread logging solver progress during long runs"""

    def __init__(self, metrics_manager, interval=30.0):
        self.metrics_manager = metrics_manager
        self.interval = interval
        self.running = False
        self.thread = None

    def _report(self):
        self.metrics_manager.update_run_uptime()
        step = self.metrics_manager.solver_step._value.get()
        t = self.metrics_manager.solver_time._value.get()
        logger.info(f"Solver at step {int(step)}, t={t:.6g}")

    def _monitor_loop(self):
        """Main monitoring loop"""
        while self.running:
            start_time = time.time()
            self._report()
            elapsed = time.time() - start_time
            time.sleep(max(0, self.interval - elapsed))

    def start(self):
        """Start the monitoring thread"""
        if not self.running:
            self.running = True
            self.thread = threading.Thread(target=self._monitor_loop, daemon=True)
            self.thread.start()
            logger.info("Progress monitor started")

    def stop(self):
        """Stop the monitoring thread"""
        self.running = False
        logger.info("Progress monitor stopped")
