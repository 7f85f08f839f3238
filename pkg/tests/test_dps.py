"""
Dual prediction scheme.

 Group 1 - configuration validation and message layout
 Group 2 - single node and sink steps
 Group 3 - model refresh schedule and model updates
 Group 4 - lockstep co-simulation (synchrony, error bound, suppression)
"""

import math

import numpy as np
import pytest

from app.analytics.arima import ArimaModel, ArimaOrder
from app.analytics.dps import (
    DpsConfig,
    DpsNodeState,
    DpsSinkState,
    ModelUpdateMsg,
    Phase,
    apply_model_update,
    co_simulate,
    maybe_refresh_model,
    new_sink_state,
    node_step,
    sink_step,
    with_threshold,
)
from app.errors import DesyncError, InvalidModelError, ValidationError

RANDOM_WALK = ArimaModel(ArimaOrder(0, 1, 0))
FAST = DpsConfig(
    threshold_epsilon=0.5,
    init_phase_ticks=30,
    refresh_interval_ticks=60,
    fit_window_ticks=120,
    forecast_order_grid=((1, 0, 0), (0, 1, 1)),
)


def noisy_sine(n, seed=0, noise=0.1, amplitude=2.0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return (20.0 + amplitude * np.sin(2 * np.pi * t / 100) + rng.normal(0, noise, n)).tolist()


def predicting_node(history):
    return DpsNodeState(model=RANDOM_WALK, shared_history=list(history), phase=Phase.PREDICTING, tick=len(history))


def predicting_sink(history):
    return DpsSinkState(model=RANDOM_WALK, reconstruction=list(history), phase=Phase.PREDICTING, tick=len(history))


# ── Group 1: configuration ───────────────────────────────────────────────────

class TestConfig:
    def test_defaults_are_valid(self):
        config = DpsConfig()
        assert config.threshold_epsilon == 0.5
        assert config.refresh_interval_ticks == 120
        assert config.init_phase_ticks == 60
        assert config.context_ticks == 64

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValidationError):
            DpsConfig(threshold_epsilon=-0.1)

    def test_init_phase_shorter_than_fitting_length_rejected(self):
        with pytest.raises(ValidationError, match="init_phase_ticks"):
            DpsConfig(init_phase_ticks=10)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError, match="unknown"):
            DpsConfig.from_dict({"epsilon": 0.5})

    def test_dict_roundtrip(self):
        assert DpsConfig.from_dict(FAST.to_dict()) == FAST

    def test_model_update_field_order(self):
        msg = ModelUpdateMsg(ArimaModel(ArimaOrder(1, 0, 0), (0.5,), (), 20.0, 0.01, 60), 60)
        assert list(msg.to_dict()) == [
            "order", "ar_coeffs", "ma_coeffs", "intercept", "noise_variance", "origin_tick", "fitted_on_length",
        ]
        assert ModelUpdateMsg.from_dict(msg.to_dict()) == msg

    def test_malformed_model_update(self):
        with pytest.raises(InvalidModelError):
            ModelUpdateMsg.from_dict({"ar_coeffs": [0.5]})


# ── Group 2: steps ───────────────────────────────────────────────────────────

class TestSteps:
    def test_miss_within_threshold_is_suppressed(self):
        node, decision = node_step(predicting_node([20.0]), 20.3, FAST)
        assert not decision.transmitted
        assert decision.value_sent is None
        assert decision.forecast == 20.0
        assert node.shared_history[-1] == 20.0

    def test_miss_beyond_threshold_is_transmitted(self):
        node, decision = node_step(predicting_node([20.0]), 21.0, FAST)
        assert decision.transmitted
        assert decision.value_sent == 21.0
        assert node.shared_history[-1] == 21.0

    def test_exactly_epsilon_is_suppressed(self):
        _, decision = node_step(predicting_node([20.0]), 20.5, FAST)
        assert not decision.transmitted

    def test_initializing_node_always_transmits(self):
        node = DpsNodeState()
        for value in (1.0, 1.0, 1.0):
            node, decision = node_step(node, value, FAST)
            assert decision.transmitted
        assert node.tick == 3

    def test_non_finite_measurement_rejected(self):
        with pytest.raises(ValidationError):
            node_step(DpsNodeState(), math.nan, FAST)

    def test_sink_fills_silent_tick_with_forecast(self):
        sink, value = sink_step(predicting_sink([20.0]), None, FAST)
        assert value == 20.0
        assert sink.reconstruction == [20.0, 20.0]

    def test_sink_rejects_value_that_should_have_been_suppressed(self):
        with pytest.raises(DesyncError):
            sink_step(predicting_sink([20.0]), 20.3, FAST)

    def test_sink_rejects_silence_while_initializing(self):
        with pytest.raises(DesyncError):
            sink_step(new_sink_state(FAST), None, FAST)


# ── Group 3: refresh and updates ─────────────────────────────────────────────

class TestRefresh:
    def test_first_model_at_end_of_initialization(self):
        sink = new_sink_state(FAST)
        for value in noisy_sine(29):
            sink, _ = sink_step(sink, value, FAST)
            assert maybe_refresh_model(sink, FAST) is None
        sink, _ = sink_step(sink, 20.0, FAST)
        msg = maybe_refresh_model(sink, FAST)
        assert msg is not None and msg.origin_tick == 30
        assert sink.phase is Phase.PREDICTING

    def test_refresh_due_exactly_on_schedule(self):
        history = noisy_sine(90)
        early = predicting_sink(history[:89])
        assert maybe_refresh_model(early, FAST) is None
        due = predicting_sink(history)
        msg = maybe_refresh_model(due, FAST)
        assert msg is not None and msg.origin_tick == 90
        assert due.pending_refresh_at == 150

    def test_consecutive_transmissions_trigger_early_refresh(self):
        config = DpsConfig(**{**FAST.to_dict(), "refresh_after_consecutive_tx": 5})
        sink = predicting_sink(noisy_sine(40))
        sink.consecutive_tx = 5
        assert maybe_refresh_model(sink, config) is not None

    def test_model_update_is_idempotent(self):
        node = predicting_node(noisy_sine(30))
        msg = ModelUpdateMsg(ArimaModel(ArimaOrder(1, 0, 0), (0.4,), (), 20.0, 0.1, 30), 30)
        once = apply_model_update(node, msg)
        snapshot = (once.model, once.phase, once.origin_tick, list(once.shared_history))
        twice = apply_model_update(once, msg)
        assert (twice.model, twice.phase, twice.origin_tick, list(twice.shared_history)) == snapshot

    def test_invalid_model_keeps_previous(self):
        node = predicting_node([20.0])
        bad = ModelUpdateMsg(ArimaModel(ArimaOrder(1, 0, 0), (1.5,)), 1)
        assert apply_model_update(node, bad).model == RANDOM_WALK

    def test_update_for_another_tick_is_a_desync(self):
        node = predicting_node([20.0, 20.1])
        with pytest.raises(DesyncError):
            apply_model_update(node, ModelUpdateMsg(RANDOM_WALK, 5))


# ── Group 4: co-simulation ───────────────────────────────────────────────────

class TestCoSimulation:
    def test_refresh_ticks_follow_schedule(self):
        run = co_simulate(noisy_sine(200), FAST)
        assert [t.tick for t in run.ticks if t.model_refresh] == [29, 89, 149]
        assert sum(1 for t in run.ticks if t.phase == "initializing") == 30

    def test_synchrony_and_error_bound_over_500_ticks(self):
        values = noisy_sine(500, seed=4)
        run = co_simulate(values, FAST)
        assert run.node.shared_history == run.sink.reconstruction
        assert max(abs(t.measurement - t.reconstructed) for t in run.ticks) <= FAST.threshold_epsilon
        assert run.transmissions + run.suppressions == 500
        assert run.suppressions > 0

    def test_error_bound_on_randomized_replays(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            epsilon = float(rng.uniform(0.05, 1.0))
            config = with_threshold(FAST, epsilon)
            run = co_simulate(noisy_sine(150, seed=seed, noise=float(rng.uniform(0.01, 0.5))), config)
            worst = max(abs(t.measurement - t.reconstructed) for t in run.ticks)
            assert worst <= epsilon, f"seed {seed}: error {worst} above {epsilon}"

    def test_infinite_threshold_suppresses_everything_after_init(self):
        run = co_simulate(noisy_sine(200), with_threshold(FAST, math.inf))
        assert run.transmissions == FAST.init_phase_ticks

    def test_zero_threshold_transmits_every_noisy_tick(self):
        run = co_simulate(noisy_sine(120, seed=8), with_threshold(FAST, 0.0))
        assert run.transmissions == 120

    def test_constant_signal_is_forecast_exactly(self):
        run = co_simulate([21.0] * 150, with_threshold(FAST, 0.1))
        assert run.transmissions == FAST.init_phase_ticks
        assert all(t.reconstructed == 21.0 for t in run.ticks)

    def test_more_tolerance_means_fewer_transmissions(self):
        values = noisy_sine(400, seed=6, noise=0.3)
        counts = [co_simulate(values, with_threshold(FAST, e)).transmissions for e in (0.05, 0.2, 0.8, 3.2)]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > counts[-1]

    def test_scheduled_model_replaces_own_fit(self):
        pinned = ArimaModel(ArimaOrder(0, 1, 0))
        run = co_simulate(noisy_sine(60), FAST, model_schedule={30: pinned})
        assert run.sink.model == pinned
        assert run.node.model == pinned
