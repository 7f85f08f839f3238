"""
Gateway Registry and Command Outbox

Tracks which gateway owns which sensor and holds reconfiguration commands
until the owning gateway collects them. A command moves through
queued -> forwarded (collected by the gateway) -> applied | failed
(reported back by the gateway).
"""

import logging
import threading
from collections import deque

from app.errors import ConflictError, NotFoundError, ValidationError
from app.models.command import DeliveryReport, DeliveryStatus

logger = logging.getLogger(__name__)


class GatewayRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._owner = {}
        self._outbox = {}
        self._commands = {}
        self._reports = {}
        self._counter = 0

    # ------------------------------------------------------------------
    # ownership
    # ------------------------------------------------------------------

    def register(self, gateway_id, sensor_ids):
        """
        Record a gateway and the sensors behind it.

        Re-registering the same gateway with the same sensors is accepted.

        Raises:
            ConflictError: If a sensor already belongs to another gateway
        """
        with self._lock:
            for sensor_id in sensor_ids:
                owner = self._owner.get(sensor_id)
                if owner is not None and owner != gateway_id:
                    raise ConflictError(f"sensor '{sensor_id}' already belongs to gateway '{owner}'")
            self._outbox.setdefault(gateway_id, deque())
            for sensor_id in sensor_ids:
                self._owner[sensor_id] = gateway_id
        logger.info(f"gateway '{gateway_id}' registered with sensors {sorted(sensor_ids)}")

    def owner_of(self, sensor_id):
        with self._lock:
            owner = self._owner.get(sensor_id)
        if owner is None:
            raise NotFoundError(f"sensor '{sensor_id}' is not known to any gateway")
        return owner

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def next_command_id(self):
        with self._lock:
            self._counter += 1
            return f"cmd-{self._counter:06d}"

    def enqueue(self, command):
        gateway_id = self.owner_of(command.target_sensor_id)
        report = DeliveryReport(command.command_id, command.target_sensor_id, gateway_id, DeliveryStatus.QUEUED)
        with self._lock:
            self._commands[command.command_id] = command
            self._reports[command.command_id] = report
            self._outbox[gateway_id].append(command.command_id)
        return report

    def drain(self, gateway_id):
        """Hand every queued command of a gateway over to it, oldest first."""
        with self._lock:
            outbox = self._outbox.get(gateway_id)
            if outbox is None:
                raise NotFoundError(f"unknown gateway '{gateway_id}'")
            commands = []
            while outbox:
                command_id = outbox.popleft()
                report = self._reports[command_id]
                self._reports[command_id] = _with_status(report, DeliveryStatus.FORWARDED)
                commands.append(self._commands[command_id])
            return commands

    def record_outcome(self, gateway_id, command_id, applied, detail=""):
        with self._lock:
            report = self._reports.get(command_id)
            if report is None:
                raise NotFoundError(f"unknown command '{command_id}'")
            if report.gateway_id != gateway_id:
                raise ValidationError(f"command '{command_id}' was not sent through gateway '{gateway_id}'")
            status = DeliveryStatus.APPLIED if applied else DeliveryStatus.FAILED
            report = _with_status(report, status, detail)
            self._reports[command_id] = report
        if not applied:
            logger.warning(f"command {command_id} failed on '{report.target_sensor_id}': {detail}")
        return report

    def report(self, command_id):
        with self._lock:
            report = self._reports.get(command_id)
        if report is None:
            raise NotFoundError(f"unknown command '{command_id}'")
        return report

    def status_counts(self):
        with self._lock:
            counts = {s.value: 0 for s in DeliveryStatus}
            for report in self._reports.values():
                counts[report.status.value] += 1
        return counts


def _with_status(report, status, detail=None):
    return DeliveryReport(
        report.command_id,
        report.target_sensor_id,
        report.gateway_id,
        status,
        report.detail if detail is None else detail,
    )
