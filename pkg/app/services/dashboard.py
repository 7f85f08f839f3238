"""
Dashboard Service

The collect / store / publish core behind the HTTP API. Route handlers
parse and sanitize requests, then call one method here; everything below
raises the platform's exceptions and never touches Flask.
"""

import logging
import threading
from collections import Counter
from datetime import datetime, timezone

from app.analytics.engine import SensorActor
from app.errors import ConflictError, NotFoundError, ValidationError
from app.helpers.events import EventBus
from app.helpers.gateways import GatewayRegistry
from app.helpers.store import MeasurementStore
from app.models.command import DeliveryStatus
from app.models.measurement import Measurement, Provenance
from app.models.subscription import Failure

logger = logging.getLogger(__name__)

COUNTERS = (
    "ingested",
    "suppressed_stored",
    "substituted",
    "conflicts",
    "commands_dispatched",
    "failures_reported",
)


class Dashboard:
    """
    Collects, stores and publishes measurements and drives reconfiguration.

    Args:
        data_dir (str | Path): Root of the append-only store
        queue_size (int): Per-listener event queue bound
        connect_timeout (float): Listener registration connect timeout
        weather_client (WeatherClient, optional): Used by weather rules

    Example:
        >>> dashboard = Dashboard("data")
        >>> dashboard.ingest(Measurement("node-1", 0, now, 21.5))
        {'seq': 1, 'sensor_id': 'node-1', 'tick': 0, ...}
    """

    def __init__(self, data_dir, queue_size=1024, connect_timeout=2.0, weather_client=None):
        self.store = MeasurementStore(data_dir)
        self.bus = EventBus(queue_size=queue_size, connect_timeout=connect_timeout)
        self.gateways = GatewayRegistry()
        self.weather_client = weather_client
        self.counters = Counter({name: 0 for name in COUNTERS})
        self._actors = {}
        self._lock = threading.Lock()

    # ========================================================================
    # GATEWAYS
    # ========================================================================

    def register_gateway(self, gateway_id, profiles):
        """
        Register a gateway and create an analytics actor for each of its sensors.

        A sensor that is already registered keeps its actor; re-registration
        with a different profile is a conflict.
        """
        with self._lock:
            for profile in profiles:
                actor = self._actors.get(profile.sensor_id)
                if actor is not None and actor.profile != profile:
                    raise ConflictError(f"sensor '{profile.sensor_id}' is registered with a different profile")
            self.gateways.register(gateway_id, [p.sensor_id for p in profiles])
            for profile in profiles:
                if profile.sensor_id not in self._actors:
                    self._actors[profile.sensor_id] = SensorActor(profile, self.weather_client)
        return {"gateway_id": gateway_id, "sensors": [p.sensor_id for p in profiles]}

    def actor(self, sensor_id):
        with self._lock:
            return self._actors.get(sensor_id)

    def collect_commands(self, gateway_id):
        return [c.to_dict() for c in self.gateways.drain(gateway_id)]

    def record_delivery(self, gateway_id, command_id, applied, detail=""):
        report = self.gateways.record_outcome(gateway_id, command_id, applied, detail)
        self.bus.publish("reconfiguration", {"event": "delivery", **report.to_dict()})
        return report

    def delivery_report(self, command_id):
        return self.gateways.report(command_id)

    # ========================================================================
    # INGESTION
    # ========================================================================

    def ingest(self, measurement, gateway_id=None):
        """
        Store a received measurement and publish it.

        Returns:
            dict: Acknowledgment with the storage sequence number; commands
                pending for ``gateway_id`` ride along

        Raises:
            ConflictError: (sensor_id, tick) already stored
            DesyncError: The sensor's DPS sink did not expect a transmission
        """
        if measurement.provenance is not Provenance.SENSED:
            raise ValidationError("ingested measurements must have provenance 'sensed'")
        stored = self._observe(measurement, transmitted=True)
        self._count("ingested")
        return self._ack(stored, gateway_id)

    def report_slot(self, sensor_id, tick, wallclock, gateway_id=None):
        """
        Record that a DPS node suppressed its sample at ``tick``.

        The sink appends its own forecast, which is stored with provenance
        ``dps_reconstructed``.
        """
        if self.actor(sensor_id) is None:
            raise NotFoundError(f"sensor '{sensor_id}' is not registered by any gateway")
        placeholder = Measurement(sensor_id, tick, wallclock, 0.0, self.actor(sensor_id).profile.unit)
        stored = self._observe(placeholder, transmitted=False)
        self._count("suppressed_stored")
        return self._ack(stored, gateway_id)

    def _observe(self, measurement, transmitted):
        actor = self.actor(measurement.sensor_id)
        if actor is None:
            stored = self._append(measurement)
            self._publish_measurement(stored)
            return stored
        with actor.lock:
            if self.store.contains(measurement.sensor_id, measurement.tick):
                self._count("conflicts")
                raise ConflictError(
                    f"measurement for sensor '{measurement.sensor_id}' at tick {measurement.tick} already stored"
                )
            saved = actor.checkpoint()
            observation = actor.observe(measurement, transmitted=transmitted)
            try:
                substituted = [self.store.append(m) for m in observation.substituted]
                stored = self.store.append(observation.measurement)
            except Exception:
                actor.restore(saved)
                raise
            for row in substituted:
                self._count("substituted")
                self._publish_measurement(row)
            self._publish_measurement(stored)
            for event in observation.analysis:
                self.bus.publish("analysis", event)
            for command in observation.commands:
                self.dispatch_reconfig(command)
        return stored

    def _append(self, measurement):
        try:
            return self.store.append(measurement)
        except ConflictError:
            self._count("conflicts")
            raise

    def _count(self, name):
        with self._lock:
            self.counters[name] += 1

    def _publish_measurement(self, stored):
        self.bus.publish("measurement", stored.to_dict())

    def _ack(self, stored, gateway_id):
        ack = stored.to_dict()
        if gateway_id is not None:
            ack["commands"] = self.collect_commands(gateway_id)
        return ack

    # ========================================================================
    # QUERY
    # ========================================================================

    def query_series(self, sensor_id, from_tick, to_tick):
        """Stored measurements with from_tick <= tick <= to_tick, in tick order; unknown sensors give []."""
        if from_tick > to_tick:
            raise ValidationError("'from' must not exceed 'to'")
        return self.store.query(sensor_id, from_tick, to_tick)

    def sensor_state(self, sensor_id):
        actor = self.actor(sensor_id)
        if actor is None:
            raise NotFoundError(f"sensor '{sensor_id}' is not registered by any gateway")
        with actor.lock:
            state = actor.state()
        state["gateway_id"] = self.gateways.owner_of(sensor_id)
        return state

    # ========================================================================
    # LISTENERS
    # ========================================================================

    def register_listener(self, subscription):
        return self.bus.register(subscription)

    def deregister_listener(self, listener_id):
        self.bus.deregister(listener_id)

    # ========================================================================
    # RECONFIGURATION
    # ========================================================================

    def dispatch_reconfig(self, command):
        """
        Validate, route and queue a command for the owning gateway.

        Returns:
            DeliveryReport: Status ``queued`` until the gateway collects it

        Raises:
            ValidationError: No field set, or the sensor cannot take the command
            NotFoundError: No gateway owns the target sensor
        """
        command.validate()
        self.gateways.owner_of(command.target_sensor_id)
        actor = self.actor(command.target_sensor_id)
        if actor is not None:
            with actor.lock:
                command = actor.adopt(command)
        elif command.model_update is not None or command.threshold_epsilon is not None:
            raise ValidationError(f"sensor '{command.target_sensor_id}' has no DPS profile")
        command = command.with_id(self.gateways.next_command_id())
        report = self.gateways.enqueue(command)
        self._count("commands_dispatched")
        self.bus.publish("reconfiguration", {"event": "dispatch", "command": command.to_dict()})
        logger.info(
            f"dispatched {command.command_id} ({command.origin}) to '{command.target_sensor_id}' "
            f"via gateway '{report.gateway_id}'"
        )
        return report

    # ========================================================================
    # FAILURES
    # ========================================================================

    def report_failure(self, sensor_id, description, wallclock=None):
        failure = Failure(sensor_id, description, wallclock or datetime.now(timezone.utc).replace(microsecond=0))
        stored = self.store.append_failure(failure)
        self._count("failures_reported")
        self.bus.publish("failure", stored.to_dict())
        logger.warning(f"failure reported for '{sensor_id}': {description}")
        return stored

    def failures(self, sensor_id=None):
        return self.store.failures(sensor_id)

    # ========================================================================
    # METRICS
    # ========================================================================

    def metrics(self):
        bus = self.bus.metrics()
        commands = self.gateways.status_counts()
        with self._lock:
            counters = {name: self.counters[name] for name in COUNTERS}
        return {
            **counters,
            "stored_total": self.store.count(),
            "stored_by_provenance": self.store.provenance_counts(),
            "events_published": bus["events_published"],
            "events_delivered": bus["events_delivered"],
            "events_dropped": bus["events_dropped"],
            "listeners": bus["listeners"],
            "commands": commands,
            "pending_commands": commands[DeliveryStatus.QUEUED.value],
        }

    def close(self):
        self.bus.close()
