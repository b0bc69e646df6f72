import os
import tempfile
import time
from unittest.mock import MagicMock

from kinetik.metrics import EVALUATION_KINDS, MetricsManager, ProgressMonitor


def test_metrics_initialization():
    """Test metrics manager initialization"""
    metrics = MetricsManager()

    # Test that metrics are initialized
    assert metrics.run_uptime._value.get() == 0
    assert metrics.solver_step._value.get() == 0
    for kind in EVALUATION_KINDS:
        assert metrics.evaluations.labels(kind=kind)._value.get() == 0
    assert metrics.conservation_drift.labels(quantity="mass")._value.get() == 0


def test_metrics_updates():
    """Test metrics updates"""
    metrics = MetricsManager()

    metrics.update_run_uptime()
    assert metrics.run_uptime._value.get() >= 0

    metrics.increment_evaluations("kernel", 10)
    metrics.increment_evaluations("kernel")
    assert metrics.evaluations.labels(kind="kernel")._value.get() == 11

    metrics.update_solver(3, 0.25)
    assert metrics.solver_step._value.get() == 3
    assert metrics.solver_time._value.get() == 0.25

    metrics.update_conservation_drift({"mass": 1e-6, "energy": 2e-6})
    assert metrics.conservation_drift.labels(quantity="energy")._value.get() == 2e-6

    metrics.set_quadrature_nodes("plane", 192)
    assert metrics.quadrature_nodes.labels(kind="plane")._value.get() == 192


def test_metrics_output():
    """Test metrics output format"""
    metrics = MetricsManager()
    metrics.update_entropy(-2.5)

    output = metrics.get_metrics()

    assert b"kinetik_run_uptime_seconds" in output
    assert b"kinetik_evaluations" in output
    assert b'kind="q_carleman"' in output
    assert b"kinetik_entropy -2.5" in output


def test_metrics_written_to_file():
    """Test the textfile exposition"""
    metrics = MetricsManager()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "metrics.prom")
        metrics.write(path)
        with open(path) as handle:
            assert "kinetik_solver_step" in handle.read()


def test_progress_monitor_start_stop():
    """Test that the monitor thread reports and stops"""
    metrics = MetricsManager()
    monitor = ProgressMonitor(metrics, interval=0.05)
    monitor._report = MagicMock(wraps=monitor._report)

    assert not monitor.running
    monitor.start()
    assert monitor.running
    assert monitor.thread.daemon
    time.sleep(0.2)
    monitor.stop()
    monitor.thread.join(timeout=1.0)

    assert not monitor.running
    assert not monitor.thread.is_alive()
    assert monitor._report.call_count >= 1
