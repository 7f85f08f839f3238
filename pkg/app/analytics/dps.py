"""
Dual Prediction Scheme

Node and sink run mirrored state machines over the same ARIMA model.
The node compares every new measurement with the one-step forecast rolled
forward on the *shared* history (the values the sink can see) and only
transmits when the forecast misses by more than ``threshold_epsilon``.
The sink appends its own forecast for every silent tick, so both sides
hold a bit-identical series at every tick under reliable in-order transport.

The sink fits the first model at the end of the initialization phase and
refreshes it every ``refresh_interval_ticks`` afterwards.

Ticks here count samples of one sensor, not simulated seconds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

from app.analytics.arima import ArimaModel, ArimaOrder, Series, forecast, select_and_fit
from app.errors import DesyncError, FitError, InvalidModelError, SeriesLengthError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_ORDER_GRID = (
    ArimaOrder(1, 0, 0),
    ArimaOrder(0, 1, 1),
    ArimaOrder(1, 1, 0),
    ArimaOrder(1, 1, 1),
    ArimaOrder(2, 1, 1),
)


class Phase(str, Enum):
    INITIALIZING = "initializing"
    PREDICTING = "predicting"


# ============================================================================
# CONFIGURATION AND MESSAGES
# ============================================================================

@dataclass(frozen=True)
class DpsConfig:
    """
    Parameters shared by both halves of the scheme.

    Attributes:
        threshold_epsilon (float): Largest forecast miss that is suppressed
        refresh_interval_ticks (int): Ticks between model refreshes
        init_phase_ticks (int): Ticks transmitted unconditionally before the first model
        forecast_order_grid (tuple): Candidate orders for model selection
        fit_window_ticks (int): Trailing reconstruction window used for refits
        context_ticks (int): Trailing shared-history window a forecast sees
        criterion (str): "aic" or "bic"
        refresh_after_consecutive_tx (int | None): Refit early after this many
            consecutive transmissions; None disables the trigger
    """

    threshold_epsilon: float = 0.5
    refresh_interval_ticks: int = 120
    init_phase_ticks: int = 60
    forecast_order_grid: tuple = DEFAULT_ORDER_GRID
    fit_window_ticks: int = 240
    context_ticks: int = 64
    criterion: str = "aic"
    refresh_after_consecutive_tx: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "threshold_epsilon", float(self.threshold_epsilon))
        object.__setattr__(
            self, "forecast_order_grid", tuple(ArimaOrder.parse(o) for o in self.forecast_order_grid)
        )
        problems = self.violations()
        if problems:
            raise ValidationError("invalid DPS config: " + "; ".join(problems))

    def violations(self):
        problems = []
        if math.isnan(self.threshold_epsilon) or self.threshold_epsilon < 0:
            problems.append("threshold_epsilon must be >= 0")
        if self.refresh_interval_ticks < 1:
            problems.append("refresh_interval_ticks must be positive")
        if not self.forecast_order_grid:
            problems.append("forecast_order_grid must not be empty")
        else:
            needed = min(o.min_fit_length() for o in self.forecast_order_grid)
            if self.init_phase_ticks < needed:
                problems.append(f"init_phase_ticks must be >= {needed} (minimum fitting length)")
            if self.fit_window_ticks < needed:
                problems.append(f"fit_window_ticks must be >= {needed}")
            deepest = max(o.p + o.d for o in self.forecast_order_grid)
            if self.context_ticks < deepest + 1:
                problems.append(f"context_ticks must be > {deepest}")
        if self.criterion not in ("aic", "bic"):
            problems.append("criterion must be 'aic' or 'bic'")
        if self.refresh_after_consecutive_tx is not None and self.refresh_after_consecutive_tx < 1:
            problems.append("refresh_after_consecutive_tx must be positive when set")
        return problems

    def to_dict(self):
        return {
            "threshold_epsilon": self.threshold_epsilon,
            "refresh_interval_ticks": self.refresh_interval_ticks,
            "init_phase_ticks": self.init_phase_ticks,
            "forecast_order_grid": [o.to_list() for o in self.forecast_order_grid],
            "fit_window_ticks": self.fit_window_ticks,
            "context_ticks": self.context_ticks,
            "criterion": self.criterion,
            "refresh_after_consecutive_tx": self.refresh_after_consecutive_tx,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown DPS config keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"invalid DPS config: {exc}") from exc


@dataclass(frozen=True)
class ModelUpdateMsg:
    """
    A model pushed from sink to node, valid from ``origin_tick`` on.

    A manually injected update may leave ``origin_tick`` unset; the dashboard
    pins it to the sink's current tick before forwarding.
    """

    model: ArimaModel
    origin_tick: int | None

    def to_dict(self):
        # canonical field order
        return {
            "order": self.model.order.to_list(),
            "ar_coeffs": list(self.model.ar_coeffs),
            "ma_coeffs": list(self.model.ma_coeffs),
            "intercept": self.model.intercept,
            "noise_variance": self.model.noise_variance,
            "origin_tick": self.origin_tick,
            "fitted_on_length": self.model.fitted_on_length,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            origin = data.get("origin_tick")
            return cls(ArimaModel.from_dict(data), None if origin is None else int(origin))
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise InvalidModelError(f"malformed model update: {exc}") from exc


@dataclass(frozen=True)
class NodeDecision:
    transmitted: bool
    value_sent: float | None
    local_value: float
    forecast: float | None = None


# ============================================================================
# STATE
# ============================================================================

@dataclass
class DpsNodeState:
    """Node half. Single owner; step functions mutate it in place and return it."""

    model: ArimaModel | None = None
    shared_history: list = field(default_factory=list)
    phase: Phase = Phase.INITIALIZING
    tick: int = 0
    origin_tick: int = 0
    consecutive_tx: int = 0

    def shared_series(self):
        return Series(tuple(self.shared_history))


@dataclass
class DpsSinkState:
    """Sink half, owned by the sensor's actor in the dashboard."""

    model: ArimaModel | None = None
    reconstruction: list = field(default_factory=list)
    phase: Phase = Phase.INITIALIZING
    tick: int = 0
    pending_refresh_at: int = 0
    origin_tick: int = 0
    consecutive_tx: int = 0
    refreshes: int = 0

    def reconstruction_series(self):
        return Series(tuple(self.reconstruction))

    def to_dict(self):
        return {
            "phase": self.phase.value,
            "tick": self.tick,
            "pending_refresh_at": self.pending_refresh_at,
            "origin_tick": self.origin_tick,
            "refreshes": self.refreshes,
            "model": self.model.to_dict() if self.model else None,
        }


def new_sink_state(config):
    return DpsSinkState(pending_refresh_at=config.init_phase_ticks)


# ============================================================================
# STEPS
# ============================================================================

def next_forecast(model, history, config):
    """One-step forecast on the trailing ``context_ticks`` of a shared history list."""
    window = history[-config.context_ticks:]
    return forecast(model, Series(tuple(window)), 1).point_values[0]


def node_step(state, measurement, config):
    """
    Process one sampled measurement on the node.

    Args:
        state (DpsNodeState): Node state, mutated in place
        measurement (float): The sensed value
        config (DpsConfig): Shared parameters

    Returns:
        tuple: (state, NodeDecision)

    Example:
        >>> # predicting, forecast 20.0, epsilon 0.5
        >>> # measurement 20.3 -> suppressed, history gains 20.0
        >>> # measurement 21.0 -> transmitted, history gains 21.0
    """
    measurement = float(measurement)
    if not math.isfinite(measurement):
        raise ValidationError("measurement must be finite")

    if state.phase is Phase.INITIALIZING or state.model is None:
        state.shared_history.append(measurement)
        state.tick += 1
        return state, NodeDecision(True, measurement, measurement)

    predicted = next_forecast(state.model, state.shared_history, config)
    if abs(measurement - predicted) > config.threshold_epsilon:
        state.shared_history.append(measurement)
        state.consecutive_tx += 1
        decision = NodeDecision(True, measurement, measurement, predicted)
    else:
        state.shared_history.append(predicted)
        state.consecutive_tx = 0
        decision = NodeDecision(False, None, measurement, predicted)
    state.tick += 1
    return state, decision


def sink_step(state, received, config):
    """
    Advance the sink by one tick.

    Args:
        state (DpsSinkState): Sink state, mutated in place
        received (float | None): The transmitted value, or None for a silent tick
        config (DpsConfig): Shared parameters

    Returns:
        tuple: (state, reconstructed value for this tick)

    Raises:
        DesyncError: A silent tick during initialization, or a received value
            the node should have suppressed
    """
    if state.phase is Phase.INITIALIZING or state.model is None:
        if received is None:
            raise DesyncError(f"tick {state.tick}: no value received during the initialization phase")
        value = float(received)
        state.reconstruction.append(value)
        state.tick += 1
        return state, value

    predicted = next_forecast(state.model, state.reconstruction, config)
    if received is None:
        state.reconstruction.append(predicted)
        state.consecutive_tx = 0
        state.tick += 1
        return state, predicted

    value = float(received)
    if abs(value - predicted) <= config.threshold_epsilon:
        raise DesyncError(
            f"tick {state.tick}: received {value!r} although the forecast {predicted!r} is within threshold"
        )
    state.reconstruction.append(value)
    state.consecutive_tx += 1
    state.tick += 1
    return state, value


def _refresh_due(state, config):
    if state.phase is Phase.INITIALIZING:
        return state.tick >= config.init_phase_ticks
    elapsed = state.tick - config.init_phase_ticks
    if elapsed > 0 and elapsed % config.refresh_interval_ticks == 0:
        return True
    limit = config.refresh_after_consecutive_tx
    return limit is not None and state.consecutive_tx >= limit


def _next_scheduled_refresh(tick, config):
    elapsed = tick - config.init_phase_ticks
    if elapsed < 0:
        return config.init_phase_ticks
    return config.init_phase_ticks + (elapsed // config.refresh_interval_ticks + 1) * config.refresh_interval_ticks


def maybe_refresh_model(state, config):
    """
    Fit and emit a new model when the refresh schedule says so.

    The first model is due once ``init_phase_ticks`` values are reconstructed;
    later ones whenever ``tick - init_phase_ticks`` is a positive multiple of
    ``refresh_interval_ticks``. A failed fit keeps the old model and emits nothing.

    Returns:
        ModelUpdateMsg | None
    """
    if not _refresh_due(state, config):
        return None

    window = Series(tuple(state.reconstruction[-config.fit_window_ticks:]))
    try:
        order, model = select_and_fit(window, config.forecast_order_grid, config.criterion)
    except (FitError, SeriesLengthError) as exc:
        logger.warning(f"model refresh at tick {state.tick} failed, keeping previous model: {exc}")
        state.pending_refresh_at = _next_scheduled_refresh(state.tick, config)
        return None

    state.model = model
    state.phase = Phase.PREDICTING
    state.origin_tick = state.tick
    state.consecutive_tx = 0
    state.refreshes += 1
    state.pending_refresh_at = _next_scheduled_refresh(state.tick, config)
    logger.debug(f"model refresh at tick {state.tick}: order {order}, sigma2={model.noise_variance:.4g}")
    return ModelUpdateMsg(model, state.tick)


def apply_model_update(state, msg):
    """
    Install a model pushed by the sink.

    An invalid model is rejected and the old one retained. The message origin
    must equal the node's tick count, otherwise the halves have drifted apart.

    Raises:
        DesyncError: If ``msg.origin_tick`` differs from the node's tick
    """
    try:
        msg.model.validate()
    except InvalidModelError as exc:
        logger.warning(f"model update rejected at tick {state.tick}: {exc}")
        return state
    if msg.origin_tick != state.tick:
        raise DesyncError(f"model update for origin {msg.origin_tick} arrived at node tick {state.tick}")
    state.model = msg.model
    state.phase = Phase.PREDICTING
    state.origin_tick = msg.origin_tick
    state.consecutive_tx = 0
    return state


def adopt_sink_model(state, msg):
    """Install an externally supplied model on the sink side (manual reconfiguration)."""
    msg.model.validate()
    if msg.origin_tick != state.tick:
        raise ValidationError(f"model origin {msg.origin_tick} does not match sink tick {state.tick}")
    state.model = msg.model
    state.phase = Phase.PREDICTING
    state.origin_tick = msg.origin_tick
    state.consecutive_tx = 0
    return state


# ============================================================================
# OFFLINE CO-SIMULATION
# ============================================================================

@dataclass(frozen=True)
class CoSimTick:
    tick: int
    measurement: float
    transmitted: bool
    forecast: float | None
    reconstructed: float
    phase: str
    model_refresh: bool


@dataclass
class CoSimulation:
    ticks: list
    node: DpsNodeState
    sink: DpsSinkState

    @property
    def transmissions(self):
        return sum(1 for t in self.ticks if t.transmitted)

    @property
    def suppressions(self):
        return sum(1 for t in self.ticks if not t.transmitted)


def co_simulate(values, config, model_schedule=None):
    """
    Run node and sink in lockstep over an in-memory trace.

    Synchrony is checked every tick; any divergence raises DesyncError.

    Args:
        values (Sequence[float]): True measurements, one per tick
        config (DpsConfig): Shared parameters
        model_schedule (dict, optional): tick -> ArimaModel overrides pushed
            in place of the sink's own refresh at that tick

    Returns:
        CoSimulation: Per-tick log plus final states
    """
    node = DpsNodeState()
    sink = new_sink_state(config)
    log = []
    model_schedule = model_schedule or {}
    for measurement in values:
        phase = node.phase.value
        node, decision = node_step(node, measurement, config)
        sink, reconstructed = sink_step(sink, decision.value_sent, config)
        if node.shared_history[-1] != sink.reconstruction[-1]:
            raise DesyncError(f"tick {sink.tick - 1}: node and sink histories diverged")

        override = model_schedule.get(sink.tick)
        if override is not None:
            msg = ModelUpdateMsg(override, sink.tick)
            adopt_sink_model(sink, msg)
        else:
            msg = maybe_refresh_model(sink, config)
        if msg is not None:
            apply_model_update(node, msg)

        log.append(
            CoSimTick(
                tick=sink.tick - 1,
                measurement=float(measurement),
                transmitted=decision.transmitted,
                forecast=decision.forecast,
                reconstructed=reconstructed,
                phase=phase,
                model_refresh=msg is not None,
            )
        )
    return CoSimulation(log, node, sink)


def with_threshold(config, epsilon):
    return replace(config, threshold_epsilon=epsilon)
