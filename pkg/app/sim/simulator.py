"""
Discrete-Event WSN Simulator

Advances a simpy clock (1 tick = 1 second) over every node's sampling
instants and every scheduled manual command. Everything the nodes
transmit goes through the gateway to a real dashboard over HTTP;
everything the dashboard commands comes back the same way. The loop is
single-threaded so a run is a pure function of the scenario and its seed.

``simulate`` runs against an external dashboard URL or, without one,
starts the dashboard (and the stub weather service when the scenario has
fixtures) in-process on free ports with a throw-away store.
"""

import logging
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import simpy

from app.helpers.client import DashboardClient
from app.helpers.events import FrameReceiver
from app.helpers.serving import ServiceThread
from app.helpers.validation import epoch_seconds, format_timestamp, from_epoch
from app.sim.gateway import Gateway
from app.sim.node import SensorNode

logger = logging.getLogger(__name__)

AUDIT_LISTENER_ID = "sim-audit"


@dataclass(frozen=True)
class IntervalChange:
    time: int
    sensor_id: str
    interval_seconds: int


@dataclass(frozen=True)
class NodeReport:
    sensor_id: str
    samples_taken: int
    transmissions: int
    suppressions: int
    receptions: int
    energy_spent_joules: float
    battery_remaining_joules: float
    max_reconstruction_error: float
    halted: bool

    def to_dict(self):
        return {
            "samples_taken": self.samples_taken,
            "transmissions": self.transmissions,
            "suppressions": self.suppressions,
            "receptions": self.receptions,
            "energy_spent_joules": self.energy_spent_joules,
            "battery_remaining_joules": self.battery_remaining_joules,
            "max_reconstruction_error": self.max_reconstruction_error,
            "halted": self.halted,
        }


@dataclass(frozen=True)
class SimReport:
    """
    Outcome of one scenario run.

    ``baseline_tx`` is what the same nodes would transmit without DPS: one
    transmission per sample.
    """

    nodes: tuple
    total_samples: int
    total_tx: int
    baseline_tx: int
    tx_reduction_ratio: float
    wallclock_runtime_seconds: float = field(default=0.0, compare=False)

    def node(self, sensor_id):
        return next(n for n in self.nodes if n.sensor_id == sensor_id)

    def to_dict(self):
        return {
            "nodes": {n.sensor_id: n.to_dict() for n in self.nodes},
            "total_samples": self.total_samples,
            "total_tx": self.total_tx,
            "baseline_tx": self.baseline_tx,
            "tx_reduction_ratio": self.tx_reduction_ratio,
        }


def reduction_ratio(transmissions, samples):
    return 0.0 if samples == 0 else 1.0 - transmissions / samples


@dataclass
class SimResult:
    """A SimReport plus the per-tick logs it was computed from."""

    scenario: object
    report: SimReport
    samples: list
    intervals: list
    commands: list
    reconstruction: list
    audit: dict | None = None


def remaining_battery(initial, spent):
    return max(0.0, initial - spent)


def build_report(nodes, runtime=0.0):
    reports = tuple(
        NodeReport(
            sensor_id=n.sensor_id,
            samples_taken=n.samples,
            transmissions=n.transmissions,
            suppressions=n.suppressions,
            receptions=n.receptions,
            energy_spent_joules=n.energy_spent(),
            battery_remaining_joules=remaining_battery(n.config.energy.battery_joules, n.energy_spent()),
            max_reconstruction_error=n.max_reconstruction_error,
            halted=n.halted,
        )
        for n in nodes
    )
    samples = sum(r.samples_taken for r in reports)
    tx = sum(r.transmissions for r in reports)
    return SimReport(reports, samples, tx, samples, reduction_ratio(tx, samples), runtime)


def summarize_counts(sensor_ids, energy, samples, transmissions, receptions, max_errors, halted):
    """
    The SimReport numbers from per-node counts, as recomputed from the logs.

    Every argument but ``sensor_ids`` is a mapping keyed by sensor id.
    """
    reports = []
    for sensor_id in sensor_ids:
        model = energy[sensor_id]
        spent = model.spent(samples[sensor_id], transmissions[sensor_id], receptions[sensor_id])
        reports.append(
            NodeReport(
                sensor_id=sensor_id,
                samples_taken=samples[sensor_id],
                transmissions=transmissions[sensor_id],
                suppressions=samples[sensor_id] - transmissions[sensor_id],
                receptions=receptions[sensor_id],
                energy_spent_joules=spent,
                battery_remaining_joules=remaining_battery(model.battery_joules, spent),
                max_reconstruction_error=max_errors[sensor_id],
                halted=halted[sensor_id],
            )
        )
    total = sum(r.samples_taken for r in reports)
    tx = sum(r.transmissions for r in reports)
    return SimReport(tuple(reports), total, tx, total, reduction_ratio(tx, total))


# ============================================================================
# EVENT LOOP
# ============================================================================

class Simulation:
    """
    One scenario run against a dashboard.

    Every node is a simpy process that sleeps until its next sampling
    instant; a command that moves that instant wakes it early. Manual
    commands are processes started before the nodes, so at equal times
    they run first.

    Args:
        config (ScenarioConfig): Validated scenario
        dashboard_url (str): Base URL of the dashboard
    """

    def __init__(self, config, dashboard_url):
        self.config = config
        self.start_epoch = epoch_seconds(config.start)
        self.client = DashboardClient(dashboard_url)
        self.nodes = [SensorNode(n, self.start_epoch) for n in config.nodes]
        self.gateway = Gateway(config.gateway_id, self.client, self.nodes, self.start_epoch)
        self.env = simpy.Environment()
        self.samples = []
        self.intervals = []
        self._logged_interval = {}
        self._wake = [None] * len(self.nodes)
        self._waiting_for = [None] * len(self.nodes)

    def _log_intervals(self, now):
        for node in self.nodes:
            if self._logged_interval.get(node.sensor_id) != node.interval:
                self._logged_interval[node.sensor_id] = node.interval
                self.intervals.append(IntervalChange(now, node.sensor_id, node.interval))

    def _wake_moved_nodes(self):
        for i, node in enumerate(self.nodes):
            wake = self._wake[i]
            if wake is None or wake.triggered or node.halted:
                continue
            if node.next_time != self._waiting_for[i]:
                wake.succeed()

    def _after_step(self, now):
        self.gateway.report_failures(now)
        self._log_intervals(now)
        self._wake_moved_nodes()

    def _node_process(self, i):
        env, node = self.env, self.nodes[i]
        while not node.halted:
            self._wake[i] = env.event()
            self._waiting_for[i] = node.next_time
            yield env.timeout(node.next_time - env.now) | self._wake[i]
            self._wake[i] = None
            if env.now != node.next_time or node.last_sample_time == env.now:
                continue
            record = node.sample(env.now)
            self.samples.append(record)
            self.gateway.forward(node, record)
            self._after_step(env.now)

    def _command_process(self, scheduled):
        yield self.env.timeout(scheduled.at_seconds)
        self.gateway.inject(scheduled.command, self.env.now)
        self._after_step(self.env.now)

    def run(self):
        """
        Run the scenario to completion.

        Returns:
            SimResult

        Raises:
            TransportError: The dashboard cannot be reached
            DesyncError: The dashboard's DPS sink lost synchrony with a node
        """
        started = time.perf_counter()
        config = self.config
        self.gateway.register()
        receiver = self._start_audit() if config.audit_listener else None

        self._log_intervals(0)
        for scheduled in config.commands:
            self.env.process(self._command_process(scheduled))
        for i in range(len(self.nodes)):
            self.env.process(self._node_process(i))

        logger.info(
            f"scenario '{config.name}': {len(self.nodes)} nodes, {config.duration_seconds} s simulated, seed {config.seed}"
        )
        self.env.run(until=config.duration_seconds)

        audit = self._finish_audit(receiver) if receiver is not None else None
        reconstruction = self._collect_reconstruction()
        report = build_report(self.nodes, time.perf_counter() - started)
        self.client.close()
        logger.info(
            f"scenario '{config.name}' done in {report.wallclock_runtime_seconds:.1f} s: "
            f"{report.total_tx}/{report.total_samples} transmitted, reduction {report.tx_reduction_ratio:.3f}"
        )
        return SimResult(
            scenario=config,
            report=report,
            samples=self.samples,
            intervals=self.intervals,
            commands=self.gateway.command_log,
            reconstruction=reconstruction,
            audit=audit,
        )

    # ------------------------------------------------------------------
    # audit listener and read-back
    # ------------------------------------------------------------------

    def _start_audit(self):
        receiver = FrameReceiver().start()
        self.client.register_listener(AUDIT_LISTENER_ID, receiver.endpoint, ["measurement"])
        return receiver

    def _finish_audit(self, receiver):
        expected = len(self.samples)
        complete = receiver.wait_for(expected, timeout=30.0)
        received = receiver.topic("measurement")
        keys = [(e["body"]["sensor_id"], e["body"]["tick"]) for e in received]
        self.client.deregister_listener(AUDIT_LISTENER_ID)
        receiver.stop()
        metrics = self.client.metrics()
        if not complete:
            logger.warning(f"audit listener received {len(received)} of {expected} measurement events")
        return {
            "expected_events": expected,
            "received_events": len(received),
            "distinct_events": len(set(keys)),
            "events_dropped": metrics["events_dropped"],
        }

    def _collect_reconstruction(self):
        rows = []
        for node in self.nodes:
            points = self.client.series(node.sensor_id, 0, self.config.duration_seconds)["points"]
            rows.extend(
                {
                    "sensor_id": p["sensor_id"],
                    "tick": p["tick"],
                    "wallclock": p["wallclock"],
                    "value": p["value"],
                    "provenance": p["provenance"],
                }
                for p in points
            )
        return rows


def run_scenario(config, dashboard_url):
    """Run ``config`` against the dashboard at ``dashboard_url``."""
    return Simulation(config, dashboard_url).run()


# ============================================================================
# EMBEDDED SERVICES
# ============================================================================

@contextmanager
def embedded_services(weather_fixtures=None, data_dir=None, host="127.0.0.1"):
    """
    Start a dashboard (and optionally the stub weather service) in-process.

    Yields:
        str: The dashboard's base URL
    """
    from app import create_app
    from app.weather.stub import create_weather_app

    scratch = tempfile.TemporaryDirectory(prefix="wsn-sim-") if data_dir is None else None
    weather = dashboard = app = None
    try:
        if weather_fixtures:
            weather = ServiceThread(create_weather_app(fixtures_dir=weather_fixtures), host, 0, "weather")
            weather.start_serving()
        app = create_app(
            {
                "DATA_DIR": data_dir or scratch.name,
                "WEATHER_URL": weather.url if weather else None,
            }
        )
        dashboard = ServiceThread(app, host, 0, "dashboard").start_serving()
        yield dashboard.url
    finally:
        if dashboard is not None:
            dashboard.stop()
        if app is not None:
            app.extensions["dashboard"].close()
        if weather is not None:
            weather.stop()
        if scratch is not None:
            scratch.cleanup()


def simulate(config, dashboard_url=None):
    """
    Run a scenario, starting embedded services when no dashboard URL is given.

    Returns:
        SimResult
    """
    if dashboard_url:
        return run_scenario(config, dashboard_url)
    with embedded_services(config.weather_fixtures) as url:
        return run_scenario(config, url)


def wallclock_of(config, t):
    return format_timestamp(from_epoch(epoch_seconds(config.start) + t))
