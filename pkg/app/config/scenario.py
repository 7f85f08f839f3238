"""
Scenario Loader

Reads a YAML scenario file into a validated ScenarioConfig. Validation
walks the whole file and raises one ScenarioError listing every violation,
so an operator fixes a scenario in one pass.

Schema (all keys optional unless noted)::

    name: reference_dps
    seed: 7
    start: "2016-06-07T00:00:00Z"
    duration_seconds: 86400          # required, > 0
    gateway_id: gw-1
    audit_listener: false
    weather_fixtures: ../fixtures/weather
    defaults:                        # merged under every node
      interval_seconds: 60
      unit: degC
      signal: {kind: synthetic, base_level: 20, daily_amplitude: 4, noise_std: 0.1}
      energy: {battery_joules: 100, cost_sample_joules: 0.002, cost_tx_joules: 0.05, cost_rx_joules: 0.03}
      dps: {threshold_epsilon: 0.5}  # false disables
    nodes:                           # required, unique sensor ids
      - sensor_id: node-1
        schedule: {segments: [...], default_interval_seconds: 240}
        weather: {location_id: lulea, policy: {...}}
    commands:                        # manual reconfiguration, injected at at_seconds
      - {at_seconds: 600, target_sensor_id: node-1, set_interval_seconds: 120}

Requires:
- PyYAML for parsing
"""

import copy
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import yaml

from app.analytics.dps import DpsConfig
from app.analytics.engine import SensorProfile
from app.analytics.relevance import ScheduleRule, WeatherRule
from app.errors import ScenarioError, WsnError
from app.helpers.validation import IDENTIFIER_RE, parse_timestamp
from app.models.command import ReconfigCommand
from app.sim.energy import EnergyModel
from app.sim.signal import SignalSource

logger = logging.getLogger(__name__)

DEFAULT_START = "2016-06-07T00:00:00Z"
TOP_LEVEL_KEYS = {
    "name",
    "seed",
    "start",
    "duration_seconds",
    "gateway_id",
    "audit_listener",
    "weather_fixtures",
    "defaults",
    "nodes",
    "commands",
}
NODE_KEYS = {"sensor_id", "interval_seconds", "unit", "signal", "energy", "dps", "schedule", "weather"}


@dataclass(frozen=True)
class NodeConfig:
    """
    One simulated sensor node.

    Attributes:
        sensor_id (str): Unique within the scenario
        signal (SignalSource): What the node measures
        initial_interval_seconds (int): Sampling interval at start, > 0
        energy (EnergyModel): Battery and per-event costs
        dps_enabled (bool): Whether the node runs the dual prediction scheme
        dps (DpsConfig | None): Parameters when enabled
        unit (str): Measurement unit
        schedule (ScheduleRule | None): Time-of-day rule evaluated by the dashboard
        weather (WeatherRule | None): Weather agreement rule evaluated by the dashboard
    """

    sensor_id: str
    signal: SignalSource
    initial_interval_seconds: int
    energy: EnergyModel = EnergyModel()
    dps_enabled: bool = False
    dps: DpsConfig | None = None
    unit: str = "degC"
    schedule: ScheduleRule | None = None
    weather: WeatherRule | None = None

    def profile(self):
        """What the gateway declares to the dashboard for this node."""
        return SensorProfile(
            sensor_id=self.sensor_id,
            interval_seconds=self.initial_interval_seconds,
            unit=self.unit,
            dps=self.dps if self.dps_enabled else None,
            schedule=self.schedule,
            weather=self.weather,
        )


@dataclass(frozen=True)
class ScheduledCommand:
    at_seconds: int
    command: ReconfigCommand


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    start: datetime
    duration_seconds: int
    nodes: tuple
    gateway_id: str = "gw-1"
    commands: tuple = ()
    audit_listener: bool = False
    weather_fixtures: str | None = None
    source_path: str | None = field(default=None, compare=False)

    def node(self, sensor_id):
        return next(n for n in self.nodes if n.sensor_id == sensor_id)

    def describe(self):
        """Plain-data summary of the scenario, as written into report summaries."""
        return {
            "name": self.name,
            "seed": self.seed,
            "start": self.start.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "duration_seconds": self.duration_seconds,
            "gateway_id": self.gateway_id,
            "nodes": {
                n.sensor_id: {
                    "initial_interval_seconds": n.initial_interval_seconds,
                    "dps_enabled": n.dps_enabled,
                    "threshold_epsilon": n.dps.threshold_epsilon if n.dps_enabled else None,
                    "energy": n.energy.to_dict(),
                }
                for n in self.nodes
            },
        }


def _merge(base, override):
    """Recursive mapping merge; ``override`` wins, lists are replaced whole."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _positive_int(value, label, problems):
    try:
        number = int(value)
    except (TypeError, ValueError):
        problems.append(f"{label} must be an integer, got {value!r}")
        return None
    if isinstance(value, bool) or number != value or number <= 0:
        problems.append(f"{label} must be a positive integer, got {value!r}")
        return None
    return number


def _node_dps(raw, defaults, label, problems):
    """``dps`` may be a mapping (enabled, merged over defaults), true, false or absent."""
    default = defaults.get("dps")
    setting = raw.get("dps", default if default is not None else False)
    if setting is False or setting is None:
        return False, None
    overrides = setting if isinstance(setting, dict) else {}
    base = default if isinstance(default, dict) else {}
    if setting is not True and not isinstance(setting, dict):
        problems.append(f"{label}: dps must be a mapping or a boolean")
        return False, None
    try:
        return True, DpsConfig.from_dict(_merge(base, overrides))
    except WsnError as exc:
        problems.append(f"{label}: {exc}")
        return False, None


def _build_node(index, raw, defaults, seed, base_dir, problems):
    label = f"nodes[{index}]"
    if not isinstance(raw, dict):
        problems.append(f"{label} must be a mapping")
        return None
    unknown = sorted(set(raw) - NODE_KEYS)
    if unknown:
        problems.append(f"{label}: unknown keys {unknown}")

    sensor_id = str(raw.get("sensor_id", ""))
    if not IDENTIFIER_RE.match(sensor_id):
        problems.append(f"{label}: sensor_id must be an identifier, got {sensor_id!r}")
    else:
        label = f"node '{sensor_id}'"

    merged = _merge({k: v for k, v in defaults.items() if k != "dps"}, {k: v for k, v in raw.items() if k != "dps"})
    interval = _positive_int(merged.get("interval_seconds", 60), f"{label}: interval_seconds", problems)

    signal_data = dict(merged.get("signal") or {})
    # the scenario seed always takes part so --seed reseeds every node
    signal_data["seed"] = [seed, signal_data.get("seed", index)]
    signal_problems = []
    signal = SignalSource.from_dict(signal_data, base_dir=base_dir, problems=signal_problems)
    problems.extend(f"{label}: {p}" for p in signal_problems)

    try:
        energy = EnergyModel.from_dict(merged.get("energy"))
        problems.extend(f"{label}: {p}" for p in energy.violations())
    except WsnError as exc:
        problems.append(f"{label}: {exc}")
        energy = EnergyModel()

    dps_enabled, dps = _node_dps(raw, defaults, label, problems)

    schedule = None
    if merged.get("schedule"):
        schedule_problems = []
        schedule = ScheduleRule.from_dict(merged["schedule"], problems=schedule_problems)
        problems.extend(f"{label}: {p}" for p in schedule_problems)
    weather = None
    if merged.get("weather"):
        try:
            weather = WeatherRule.from_dict(merged["weather"])
        except WsnError as exc:
            problems.append(f"{label}: {exc}")
    if schedule is not None and weather is not None:
        problems.append(f"{label}: schedule and weather rules are mutually exclusive")

    if interval is None:
        return None
    return NodeConfig(
        sensor_id=sensor_id,
        signal=signal,
        initial_interval_seconds=interval,
        energy=energy,
        dps_enabled=dps_enabled,
        dps=dps,
        unit=str(merged.get("unit", "degC")),
        schedule=schedule,
        weather=weather,
    )


def _build_command(index, raw, sensor_ids, duration, problems):
    label = f"commands[{index}]"
    if not isinstance(raw, dict):
        problems.append(f"{label} must be a mapping")
        return None
    raw = dict(raw)
    at = raw.pop("at_seconds", None)
    try:
        at = int(at)
    except (TypeError, ValueError):
        problems.append(f"{label}: at_seconds must be an integer")
        return None
    if not 0 <= at < duration:
        problems.append(f"{label}: at_seconds must fall inside the scenario duration")
    try:
        command = ReconfigCommand.from_dict(raw)
    except WsnError as exc:
        problems.append(f"{label}: {exc}")
        return None
    if command.target_sensor_id not in sensor_ids:
        problems.append(f"{label}: unknown target '{command.target_sensor_id}'")
    return ScheduledCommand(at, command)


def parse_scenario(data, base_dir=".", seed=None, source_path=None):
    """
    Validate a scenario mapping.

    Args:
        data (dict): Parsed YAML document
        base_dir (str | Path): Directory relative paths are resolved against
        seed (int, optional): Overrides the file's seed

    Returns:
        ScenarioConfig

    Raises:
        ScenarioError: With every violation found
    """
    problems = []
    if not isinstance(data, dict):
        raise ScenarioError(["scenario must be a mapping"])
    unknown = sorted(set(data) - TOP_LEVEL_KEYS)
    if unknown:
        problems.append(f"unknown keys {unknown}")

    try:
        seed = int(data.get("seed", 0) if seed is None else seed)
    except (TypeError, ValueError):
        problems.append("seed must be an integer")
        seed = 0
    try:
        start = parse_timestamp(data.get("start", DEFAULT_START))
    except WsnError as exc:
        problems.append(f"start: {exc}")
        start = parse_timestamp(DEFAULT_START)
    duration = _positive_int(data.get("duration_seconds"), "duration_seconds", problems) or 0

    gateway_id = str(data.get("gateway_id", "gw-1"))
    if not IDENTIFIER_RE.match(gateway_id):
        problems.append(f"gateway_id must be an identifier, got {gateway_id!r}")

    defaults = data.get("defaults") or {}
    if not isinstance(defaults, dict):
        problems.append("defaults must be a mapping")
        defaults = {}

    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        problems.append("nodes must be a non-empty list")
        raw_nodes = []
    nodes = []
    for i, raw in enumerate(raw_nodes):
        node = _build_node(i, raw, defaults, seed, base_dir, problems)
        if node is not None:
            nodes.append(node)
    ids = [n.sensor_id for n in nodes]
    duplicates = sorted({s for s in ids if ids.count(s) > 1})
    if duplicates:
        problems.append(f"duplicate sensor ids {duplicates}")

    commands = []
    for i, raw in enumerate(data.get("commands") or []):
        scheduled = _build_command(i, raw, set(ids), duration, problems)
        if scheduled is not None:
            commands.append(scheduled)

    fixtures = data.get("weather_fixtures")
    if fixtures is not None:
        fixtures_path = Path(fixtures)
        if not fixtures_path.is_absolute():
            fixtures_path = Path(base_dir) / fixtures_path
        if not fixtures_path.is_dir():
            problems.append(f"weather_fixtures directory not found: {fixtures_path}")
        fixtures = str(fixtures_path)

    if problems:
        raise ScenarioError(problems)
    return ScenarioConfig(
        name=str(data.get("name") or (Path(source_path).stem if source_path else "scenario")),
        seed=seed,
        start=start,
        duration_seconds=duration,
        nodes=tuple(nodes),
        gateway_id=gateway_id,
        commands=tuple(sorted(commands, key=lambda c: c.at_seconds)),
        audit_listener=bool(data.get("audit_listener", False)),
        weather_fixtures=fixtures,
        source_path=source_path,
    )


def load_scenario(path, seed=None):
    """
    Load and validate a scenario file.

    Raises:
        ScenarioError: Unreadable YAML or any schema violation
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ScenarioError([f"cannot read scenario {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{path}: invalid YAML: {exc}"]) from exc
    config = parse_scenario(data, base_dir=path.parent, seed=seed, source_path=str(path))
    logger.info(f"loaded scenario '{config.name}' ({len(config.nodes)} nodes, {config.duration_seconds} s)")
    return config
