"""
Simulated Sensor Node

Samples its signal, runs the node half of the dual prediction scheme,
pays for every sample, transmission and reception out of its battery and
applies reconfiguration commands handed down by its gateway.
"""

import logging
from dataclasses import dataclass

from app.analytics.dps import DpsNodeState, ModelUpdateMsg, apply_model_update, node_step, with_threshold
from app.errors import WsnError
from app.sim.energy import apply_energy
from app.sim.signal import sample_signal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleRecord:
    """
    One sampling instant as the node saw it.

    ``reconstructed`` is the value the shared history gained: the measurement
    when transmitted, the forecast when suppressed.
    """

    time: int
    sensor_id: str
    dps_tick: int | None
    value: float
    transmitted: bool
    forecast: float | None
    reconstructed: float
    phase: str
    interval_seconds: int
    battery_joules: float

    @property
    def abs_error(self):
        return abs(self.value - self.reconstructed)


class SensorNode:
    """
    A node driven by the simulator's event loop.

    Args:
        config (NodeConfig): Node definition
        start_epoch (int): Epoch seconds of the scenario start
    """

    def __init__(self, config, start_epoch=0):
        self.config = config
        self.start_epoch = start_epoch
        self.interval = config.initial_interval_seconds
        self.energy = config.energy
        self.dps_config = config.dps if config.dps_enabled else None
        self.dps = DpsNodeState() if self.dps_config is not None else None
        self.samples = 0
        self.transmissions = 0
        self.suppressions = 0
        self.receptions = 0
        self.halted = False
        self.last_sample_time = None
        self.next_time = 0
        self.max_reconstruction_error = 0.0

    @property
    def sensor_id(self):
        return self.config.sensor_id

    def _charge(self, event):
        self.energy = apply_energy(self.energy, event)
        if self.energy.depleted and not self.halted:
            self.halted = True
            logger.warning(f"node '{self.sensor_id}' battery depleted")

    def sample(self, t):
        """
        Take the sample due at simulated second ``t``.

        The whole instant completes (sample, decision, transmission) before
        a depleted battery halts the node.

        Returns:
            SampleRecord
        """
        value = sample_signal(self.config.signal, t, self.start_epoch)
        self.samples += 1
        self.last_sample_time = t
        self.next_time = t + self.interval
        self._charge("sample")

        if self.dps is None:
            dps_tick, phase, transmitted, forecast, reconstructed = None, "disabled", True, None, value
        else:
            dps_tick = self.dps.tick
            phase = self.dps.phase.value
            self.dps, decision = node_step(self.dps, value, self.dps_config)
            transmitted = decision.transmitted
            forecast = decision.forecast
            reconstructed = self.dps.shared_history[-1]

        if transmitted:
            self.transmissions += 1
            self._charge("tx")
        else:
            self.suppressions += 1
        record = SampleRecord(
            time=t,
            sensor_id=self.sensor_id,
            dps_tick=dps_tick,
            value=value,
            transmitted=transmitted,
            forecast=forecast,
            reconstructed=reconstructed,
            phase=phase,
            interval_seconds=self.interval,
            battery_joules=self.energy.battery_joules,
        )
        self.max_reconstruction_error = max(self.max_reconstruction_error, record.abs_error)
        return record

    def receive(self, command, now):
        """
        Apply a command delivered by the gateway at simulated second ``now``.

        Returns:
            tuple: (applied, detail)
        """
        if self.halted:
            return False, "node halted"
        self.receptions += 1
        self._charge("rx")
        try:
            details = self._apply(command, now)
        except WsnError as exc:
            logger.warning(f"node '{self.sensor_id}' rejected {command.get('command_id')}: {exc}")
            return False, str(exc)
        return True, "; ".join(details)

    def _apply(self, command, now):
        details = []
        if command.get("model_update") is not None:
            if self.dps is None:
                raise WsnError("node does not run DPS")
            msg = ModelUpdateMsg.from_dict(command["model_update"])
            apply_model_update(self.dps, msg)
            details.append(f"model {msg.model.order} from tick {msg.origin_tick}")
        if command.get("threshold_epsilon") is not None:
            if self.dps is None:
                raise WsnError("node does not run DPS")
            self.dps_config = with_threshold(self.dps_config, command["threshold_epsilon"])
            details.append(f"epsilon {command['threshold_epsilon']}")
        if command.get("set_interval_seconds") is not None:
            self._set_interval(int(command["set_interval_seconds"]), now)
            details.append(f"interval {self.interval}s")
        if command.get("substitute_source") is not None:
            details.append(f"substitute {command['substitute_source']}")
        return details

    def _set_interval(self, interval, now):
        # the next sample moves to last sample + new interval, never into the past
        self.interval = interval
        if self.last_sample_time is None:
            return
        self.next_time = max(self.last_sample_time + interval, now)

    def energy_spent(self):
        return self.energy.spent(self.samples, self.transmissions, self.receptions)
