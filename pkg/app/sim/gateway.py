"""
Simulated Gateway

The sink node of the simulated WSN. It forwards every sampling instant
of its nodes to the dashboard over the real HTTP API (a measurement when
the node transmitted, a suppressed slot otherwise) and hands the
commands riding on each response down to the target node, reporting
every delivery outcome back.

Node-to-gateway transport is an in-process reliable ordered channel.
"""

import logging
from dataclasses import dataclass

from app.errors import NotFoundError, ValidationError
from app.helpers.validation import format_timestamp, from_epoch
from app.models.measurement import Measurement

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommandRecord:
    time: int
    sensor_id: str
    command_id: str
    origin: str
    set_interval_seconds: int | None
    threshold_epsilon: float | None
    substitute_source: str | None
    model_order: str | None
    received: bool
    applied: bool
    detail: str


class Gateway:
    """
    Args:
        gateway_id (str): Identifier registered with the dashboard
        client (DashboardClient): HTTP client for the dashboard
        nodes (Iterable[SensorNode]): Nodes this gateway serves
        start_epoch (int): Epoch seconds of the scenario start
    """

    def __init__(self, gateway_id, client, nodes, start_epoch):
        self.gateway_id = gateway_id
        self.client = client
        self.nodes = {node.sensor_id: node for node in nodes}
        self.start_epoch = start_epoch
        self.command_log = []
        self.failures_reported = set()

    def wallclock(self, t):
        return format_timestamp(from_epoch(self.start_epoch + t))

    def register(self):
        profiles = [node.config.profile().to_dict() for node in self.nodes.values()]
        return self.client.register_gateway(self.gateway_id, profiles)

    def forward(self, node, record):
        """Report one sampling instant and deliver the commands that come back."""
        if record.transmitted:
            measurement = Measurement(
                node.sensor_id, record.time, self.wallclock(record.time), record.value, node.config.unit
            )
            ack = self.client.ingest({**measurement.to_dict(), "gateway_id": self.gateway_id})
        else:
            ack = self.client.report_slot(
                {
                    "sensor_id": node.sensor_id,
                    "tick": record.time,
                    "wallclock": self.wallclock(record.time),
                    "gateway_id": self.gateway_id,
                }
            )
        self.deliver(ack.get("commands", []), record.time)
        return ack

    def inject(self, command, now):
        """
        Post a manual command to the dashboard, then collect and deliver it.

        A command the dashboard rejects is logged as not applied.
        """
        try:
            self.client.dispatch({k: v for k, v in command.to_dict().items() if v is not None})
        except (ValidationError, NotFoundError) as exc:
            logger.warning(f"dashboard rejected manual command for '{command.target_sensor_id}': {exc}")
            self.command_log.append(
                CommandRecord(
                    time=now,
                    sensor_id=command.target_sensor_id,
                    command_id="",
                    origin=command.origin,
                    set_interval_seconds=command.set_interval_seconds,
                    threshold_epsilon=command.threshold_epsilon,
                    substitute_source=command.substitute_source.value if command.substitute_source else None,
                    model_order=None,
                    received=False,
                    applied=False,
                    detail=f"rejected: {exc}",
                )
            )
            return
        self.poll(now)

    def poll(self, now):
        self.deliver(self.client.poll_commands(self.gateway_id)["commands"], now)

    def deliver(self, commands, now):
        for command in commands:
            node = self.nodes.get(command["target_sensor_id"])
            received = node is not None and not node.halted
            if node is None:
                applied, detail = False, "unknown sensor"
            else:
                applied, detail = node.receive(command, now)
            self.client.report_delivery(self.gateway_id, command["command_id"], applied, detail)
            update = command.get("model_update")
            self.command_log.append(
                CommandRecord(
                    time=now,
                    sensor_id=command["target_sensor_id"],
                    command_id=command["command_id"],
                    origin=command.get("origin", "manual"),
                    set_interval_seconds=command.get("set_interval_seconds"),
                    threshold_epsilon=command.get("threshold_epsilon"),
                    substitute_source=command.get("substitute_source"),
                    model_order="({},{},{})".format(*update["order"]) if update else None,
                    received=received,
                    applied=applied,
                    detail=detail,
                )
            )
            logger.debug(f"t={now}: {command['command_id']} -> '{command['target_sensor_id']}' applied={applied}")

    def report_failures(self, now):
        """Tell the dashboard about nodes that halted since the last check."""
        for node in self.nodes.values():
            if node.halted and node.sensor_id not in self.failures_reported:
                self.failures_reported.add(node.sensor_id)
                self.client.report_failure(node.sensor_id, "battery depleted", self.wallclock(now))
