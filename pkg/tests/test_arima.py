"""
ARIMA fitting and forecasting.

 Group 1 - differencing and integration
 Group 2 - fitting (degenerate models, coefficient recovery, model invariants)
 Group 3 - forecasting (closed-form cases, independent recursion, determinism)
 Group 4 - order selection
"""

import math

import numpy as np
import pytest
from scipy.signal import lfilter

from app.analytics.arima import (
    ArimaModel,
    ArimaOrder,
    Series,
    difference,
    fit_arima,
    forecast,
    information_criterion,
    integrate,
    rolling_forecast_mse,
    score_orders,
    select_and_fit,
    select_order,
)
from app.errors import ArityError, InvalidModelError, SelectionError, SeriesLengthError, ValidationError


def arma_sample(n, ar=(), ma=(), sigma=1.0, seed=0, mean=0.0, burn=500):
    rng = np.random.default_rng(seed)
    e = rng.normal(0.0, sigma, n + burn)
    x = lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], e)
    return Series(tuple((x[burn:] + mean).tolist()))


# ── Group 1: differencing ────────────────────────────────────────────────────

class TestDifferencing:
    def test_constant_series_differences_to_zero(self):
        assert difference(Series([5.0, 5.0, 5.0]), 1).values == (0.0, 0.0)

    def test_second_difference_of_quadratic_sequence(self):
        assert difference(Series([1.0, 2.0, 4.0, 7.0]), 2).values == (1.0, 1.0)

    def test_d_zero_is_identity(self):
        s = Series([3.0, 1.0, 4.0])
        assert difference(s, 0) == s

    def test_too_short_series_rejected(self):
        with pytest.raises(SeriesLengthError):
            difference(Series([1.0, 2.0]), 2)

    def test_integrate_inverts_first_difference(self):
        assert integrate(Series([0.0, 0.0]), [5.0], 1).values == (5.0, 5.0, 5.0)

    def test_integrate_inverts_second_difference(self):
        assert integrate(Series([1.0, 1.0]), [1.0, 2.0], 2).values == (1.0, 2.0, 4.0, 7.0)

    def test_wrong_number_of_initial_values(self):
        with pytest.raises(ArityError):
            integrate(Series([1.0, 1.0]), [1.0], 2)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_roundtrip_on_integer_valued_walk(self, d):
        # integer-valued floats keep every partial sum exact
        rng = np.random.default_rng(d)
        s = Series(tuple(float(v) for v in rng.integers(-50, 50, 100)))
        back = integrate(difference(s, d), s.values[:d], d)
        assert back.values == s.values, "integration must undo differencing exactly"

    @pytest.mark.parametrize("seed", range(5))
    def test_first_difference_roundtrip_is_exact_on_sensor_scale_values(self, seed):
        # consecutive values within a factor of two subtract exactly, so the running sum lands on them
        values = np.random.default_rng(seed).uniform(15.0, 25.0, 100)
        s = Series(tuple(values.tolist()))
        assert integrate(difference(s, 1), s.values[:1], 1).values == s.values

    @pytest.mark.parametrize("d", [2, 3])
    def test_higher_order_roundtrip_on_real_values_is_within_rounding(self, d):
        values = np.random.default_rng(20 + d).normal(20.0, 3.0, 100)
        s = Series(tuple(values.tolist()))
        back = integrate(difference(s, d), s.values[:d], d)
        assert len(back.values) == 100
        assert back.values[:d] == s.values[:d]
        np.testing.assert_allclose(back.values, s.values, rtol=0, atol=1e-9)

    def test_offset_and_start_tick_carry_through(self):
        s = Series([1.0, 2.0, 4.0], start_tick=10, tick_seconds=60, offset_seconds=1000)
        diffed = difference(s, 1)
        assert diffed.start_tick == 11
        assert diffed.times() == [1000 + 11 * 60, 1000 + 12 * 60]


# ── Group 2: fitting ─────────────────────────────────────────────────────────

class TestFitting:
    def test_constant_mean_model(self):
        model = fit_arima(Series([7.0] * 40), ArimaOrder(0, 0, 0))
        assert model.intercept == 7.0
        assert model.noise_variance == 0.0

    def test_series_too_short(self):
        with pytest.raises(SeriesLengthError):
            fit_arima(Series([1.0] * 29), ArimaOrder(1, 0, 0))

    def test_minimum_length_grows_with_order(self):
        assert ArimaOrder(2, 1, 1).min_fit_length() == 31
        with pytest.raises(SeriesLengthError):
            fit_arima(arma_sample(30, ar=(0.5,)), ArimaOrder(2, 1, 1))

    def test_ar1_coefficient_recovered_on_nine_of_ten_seeds(self):
        phis = [
            fit_arima(arma_sample(2000, ar=(0.8,), sigma=0.1, seed=seed), ArimaOrder(1, 0, 0)).ar_coeffs[0]
            for seed in range(10)
        ]
        hits = sum(abs(phi - 0.8) <= 0.05 for phi in phis)
        assert hits >= 9, f"phi within 0.05 of 0.8 on {hits}/10 seeds: {[round(p, 3) for p in phis]}"

    def test_ma1_coefficient_recovered_on_eight_of_ten_seeds(self):
        thetas = [fit_arima(arma_sample(5000, ma=(0.5,), seed=seed), ArimaOrder(0, 0, 1)).ma_coeffs[0] for seed in range(10)]
        hits = sum(abs(theta - 0.5) <= 0.05 for theta in thetas)
        assert hits >= 8, f"theta within 0.05 of 0.5 on {hits}/10 seeds: {[round(t, 3) for t in thetas]}"

    def test_arma11_recovered_on_most_seeds(self):
        hits = 0
        for seed in range(10):
            model = fit_arima(arma_sample(5000, ar=(0.6,), ma=(0.3,), seed=seed), ArimaOrder(1, 0, 1))
            hits += abs(model.ar_coeffs[0] - 0.6) <= 0.05 and abs(model.ma_coeffs[0] - 0.3) <= 0.05
        assert hits >= 8, f"only {hits}/10 seeds recovered ARMA(1,1)"

    def test_fitted_models_satisfy_invariants(self):
        s = arma_sample(400, ar=(0.5,), ma=(0.4,), seed=3, mean=20.0)
        for order in [(1, 0, 0), (0, 1, 1), (1, 1, 0), (1, 1, 1), (2, 1, 1)]:
            model = fit_arima(s, ArimaOrder(*order))
            assert model.validate() is model
            assert model.is_stationary and model.is_invertible
            assert model.noise_variance >= 0
            assert model.fitted_on_length == 400

    def test_fit_is_deterministic(self):
        s = arma_sample(300, ar=(0.7,), ma=(0.2,), seed=5)
        assert fit_arima(s, ArimaOrder(1, 0, 1)) == fit_arima(s, ArimaOrder(1, 0, 1))

    def test_non_finite_series_rejected(self):
        with pytest.raises(ValidationError):
            Series([1.0, math.nan])

    def test_explosive_model_is_invalid(self):
        with pytest.raises(InvalidModelError):
            ArimaModel(ArimaOrder(1, 0, 0), ar_coeffs=(1.2,)).validate()

    def test_model_dict_has_canonical_field_order(self):
        model = ArimaModel(ArimaOrder(1, 0, 1), (0.5,), (0.2,), 1.0, 0.1, 50)
        assert list(model.to_dict()) == [
            "order", "ar_coeffs", "ma_coeffs", "intercept", "noise_variance", "fitted_on_length",
        ]
        assert ArimaModel.from_dict(model.to_dict()) == model


# ── Group 3: forecasting ─────────────────────────────────────────────────────

def naive_forecast(model, history, horizon):
    """Step-by-step recursion written out independently for orders up to (1,1,1)."""
    (phi,) = model.ar_coeffs or (0.0,)
    (theta,) = model.ma_coeffs or (0.0,)
    x = np.asarray(history, dtype=float)
    w = np.diff(x) if model.order.d == 1 else x
    z = w - model.intercept
    p = model.order.p
    e = np.zeros(len(z))
    for t in range(p, len(z)):
        e[t] = z[t] - (phi * z[t - 1] if p else 0.0) - (theta * e[t - 1] if t >= 1 else 0.0)
    z_prev, e_prev = z[-1], e[-1]
    last = x[-1]
    out = []
    for _ in range(horizon):
        z_next = (phi * z_prev if p else 0.0) + theta * e_prev
        step = z_next + model.intercept
        last = last + step if model.order.d == 1 else step
        out.append(last)
        z_prev, e_prev = z_next, 0.0
    return out


class TestForecast:
    def test_random_walk_is_flat(self):
        model = ArimaModel(ArimaOrder(0, 1, 0))
        result = forecast(model, Series([16.0, 16.8, 17.2]), 20)
        assert result.point_values == (17.2,) * 20
        assert result.horizon == 20

    def test_ar1_geometric_decay(self):
        model = ArimaModel(ArimaOrder(1, 0, 0), ar_coeffs=(0.5,))
        assert forecast(model, Series([8.0]), 3).point_values == (4.0, 2.0, 1.0)

    def test_origin_is_last_observed_tick(self):
        model = ArimaModel(ArimaOrder(0, 1, 0))
        assert forecast(model, Series([1.0, 2.0], start_tick=40), 1).origin_tick == 41

    def test_arima111_matches_independent_recursion(self):
        rng = np.random.default_rng(11)
        walk = np.cumsum(lfilter([1.0, 0.3], [1.0, -0.5], rng.normal(0, 0.2, 300))) + 20.0
        series = Series(tuple(walk.tolist()))
        model = fit_arima(series, ArimaOrder(1, 1, 1))
        got = forecast(model, series, 20).point_values
        expected = naive_forecast(model, series.values, 20)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_forecast_is_bit_identical_across_calls(self):
        series = arma_sample(200, ar=(0.6,), ma=(0.3,), seed=2)
        model = fit_arima(series, ArimaOrder(1, 0, 1))
        assert forecast(model, series, 20) == forecast(model, series, 20)

    def test_stationary_forecast_decays_toward_zero(self):
        series = arma_sample(500, ar=(0.7,), seed=9)
        fitted = fit_arima(series, ArimaOrder(1, 0, 0))
        model = ArimaModel(fitted.order, fitted.ar_coeffs, (), 0.0, fitted.noise_variance)
        points = forecast(model, series, 20).point_values
        assert all(abs(v) <= abs(points[0]) + 1e-9 for v in points)

    def test_insufficient_history(self):
        model = ArimaModel(ArimaOrder(2, 1, 0), ar_coeffs=(0.3, 0.1))
        with pytest.raises(SeriesLengthError):
            forecast(model, Series([1.0, 2.0]), 1)

    def test_zero_horizon_rejected(self):
        with pytest.raises(ValidationError):
            forecast(ArimaModel(ArimaOrder(0, 1, 0)), Series([1.0]), 0)

    def test_fitted_model_forecasts_nearly_as_well_as_true_model(self):
        oracle = ArimaModel(ArimaOrder(1, 0, 1), (0.6,), (0.3,), 0.0, 1.0)
        good = 0
        for seed in range(10):
            series = arma_sample(500, ar=(0.6,), ma=(0.3,), seed=100 + seed)
            fitted = fit_arima(series, ArimaOrder(1, 0, 1))
            fitted_mse = rolling_forecast_mse(fitted, series, 20, first_origin=100, step=10)
            oracle_mse = rolling_forecast_mse(oracle, series, 20, first_origin=100, step=10)
            good += fitted_mse <= 1.2 * oracle_mse
        assert good >= 8, f"fitted model within 20% of the true model on {good}/10 seeds"

    def test_rolling_mse_of_perfect_model_is_zero(self):
        series = Series(tuple(float(i) for i in range(60)))
        model = ArimaModel(ArimaOrder(0, 1, 0), intercept=1.0)
        assert rolling_forecast_mse(model, series, 5, first_origin=10) == 0.0


# ── Group 4: order selection ─────────────────────────────────────────────────

class TestSelection:
    def test_single_element_grid(self):
        assert select_order(arma_sample(100, seed=1), [ArimaOrder(0, 1, 1)]) == ArimaOrder(0, 1, 1)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValidationError):
            select_order(arma_sample(100, seed=1), [])

    def test_all_candidates_failing(self):
        with pytest.raises(SelectionError):
            select_order(Series([1.0] * 35), [ArimaOrder(2, 0, 2)])

    def test_ar1_data_picks_ar1_and_matches_brute_force_ranking(self):
        grid = [ArimaOrder(1, 0, 0), ArimaOrder(0, 0, 1), ArimaOrder(2, 0, 0)]
        hits = 0
        for seed in range(10):
            series = arma_sample(2000, ar=(0.8,), sigma=0.1, seed=seed)
            chosen = select_order(series, grid)
            brute = {
                s.order: information_criterion(s.css, s.n_residuals, s.order.n_params)
                for s in score_orders(series, grid)
            }
            best = min(brute.values())
            assert brute[chosen] == best, "selected order must minimize AIC"
            hits += chosen == ArimaOrder(1, 0, 0)
        assert hits >= 8, f"AR(1) chosen on {hits}/10 seeds"

    def test_white_noise_prefers_mean_model(self):
        grid = [ArimaOrder(0, 0, 0), ArimaOrder(1, 0, 0)]
        picks = [select_order(arma_sample(500, seed=s), grid, criterion="bic") for s in range(50)]
        share = sum(p == ArimaOrder(0, 0, 0) for p in picks) / len(picks)
        assert share >= 0.9, f"mean model chosen on {share:.0%} of seeds"

    def test_constant_series_picks_random_walk_with_drift(self):
        order, model = select_and_fit(Series([21.0] * 60), [ArimaOrder(1, 0, 0), ArimaOrder(0, 1, 1)])
        assert order == ArimaOrder(0, 1, 1)
        assert forecast(model, Series([21.0] * 60), 5).point_values == (21.0,) * 5

    def test_bic_penalizes_more_than_aic(self):
        assert information_criterion(10.0, 100, 2, "bic") > information_criterion(10.0, 100, 2, "aic")

    def test_unknown_criterion(self):
        with pytest.raises(ValidationError):
            information_criterion(1.0, 10, 1, "hqic")
