"""
ARIMA Fitting and Forecasting

Numerical engine behind the dual prediction scheme and model refresh.

Fitting runs on the dashboard only: the series is differenced d times,
centered on its mean, initialized with the Hannan-Rissanen two-stage
regression (a long autoregression supplies residual proxies) and then
refined by minimizing the conditional sum of squares with scipy's
Nelder-Mead simplex.

Forecasting is written as plain Python loops with a fixed ascending-lag
summation order. Node and sink call it on identical inputs and must get
bit-identical floats; no vectorized reductions are used on this path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from app.errors import (
    ArityError,
    FitError,
    InvalidModelError,
    SelectionError,
    SeriesLengthError,
    ValidationError,
)

logger = logging.getLogger(__name__)

MAX_ORDER = 5
MIN_FIT_LENGTH = 30


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class Series:
    """
    Evenly spaced measurement samples.

    Sample ``i`` sits at ``offset_seconds + (start_tick + i) * tick_seconds``
    seconds on the series' time base.
    """

    values: tuple
    start_tick: int = 0
    tick_seconds: int = 1
    offset_seconds: int = 0

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("series values must be finite")
        if int(self.tick_seconds) <= 0:
            raise ValidationError("tick_seconds must be positive")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def times(self):
        """Absolute seconds of every sample."""
        return [self.offset_seconds + (self.start_tick + i) * self.tick_seconds for i in range(len(self.values))]



@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name in ("p", "d", "q"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0 or value > MAX_ORDER:
                raise ValidationError(f"ARIMA {name} must be an integer in [0, {MAX_ORDER}], got {value!r}")

    @property
    def n_params(self):
        return self.p + self.q

    def min_fit_length(self):
        return max(MIN_FIT_LENGTH, 10 * (self.p + self.q) + self.d)

    def to_list(self):
        return [self.p, self.d, self.q]

    @classmethod
    def parse(cls, value):
        """Accept ``[p, d, q]``, ``(p, d, q)``, ``{"p":..}`` or an ArimaOrder."""
        if isinstance(value, cls):
            return value
        if isinstance(value, dict):
            return cls(int(value["p"]), int(value["d"]), int(value["q"]))
        p, d, q = value
        return cls(int(p), int(d), int(q))

    def __str__(self):
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class ArimaModel:
    """
    Fitted ARIMA(p, d, q) model.

    The differenced series ``y`` follows
    ``y_t - mu = sum(phi_i (y_{t-i} - mu)) + e_t + sum(theta_j e_{t-j})``
    with ``mu`` the intercept and ``Var(e) = noise_variance``.
    """

    order: ArimaOrder
    ar_coeffs: tuple = ()
    ma_coeffs: tuple = ()
    intercept: float = 0.0
    noise_variance: float = 0.0
    fitted_on_length: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(c) for c in self.ar_coeffs))
        object.__setattr__(self, "ma_coeffs", tuple(float(c) for c in self.ma_coeffs))
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def is_stationary(self):
        return _roots_inside(self.ar_coeffs, sign=-1.0)

    @property
    def is_invertible(self):
        return _roots_inside(self.ma_coeffs, sign=1.0)

    def validate(self):
        """Raise InvalidModelError unless every model invariant holds."""
        if len(self.ar_coeffs) != self.order.p or len(self.ma_coeffs) != self.order.q:
            raise InvalidModelError(f"coefficient count does not match order {self.order}")
        numbers = self.ar_coeffs + self.ma_coeffs + (self.intercept, self.noise_variance)
        if not all(math.isfinite(v) for v in numbers):
            raise InvalidModelError("model parameters must be finite")
        if self.noise_variance < 0:
            raise InvalidModelError("noise_variance must be non-negative")
        if not self.is_stationary:
            raise InvalidModelError("AR polynomial has a root on or inside the unit circle")
        if not self.is_invertible:
            raise InvalidModelError("MA polynomial has a root on or inside the unit circle")
        return self

    def to_dict(self):
        return {
            "order": self.order.to_list(),
            "ar_coeffs": list(self.ar_coeffs),
            "ma_coeffs": list(self.ma_coeffs),
            "intercept": self.intercept,
            "noise_variance": self.noise_variance,
            "fitted_on_length": self.fitted_on_length,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                order=ArimaOrder.parse(data["order"]),
                ar_coeffs=tuple(data.get("ar_coeffs", ())),
                ma_coeffs=tuple(data.get("ma_coeffs", ())),
                intercept=float(data.get("intercept", 0.0)),
                noise_variance=float(data.get("noise_variance", 0.0)),
                fitted_on_length=int(data.get("fitted_on_length", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModelError(f"malformed model: {exc}") from exc


@dataclass(frozen=True)
class Forecast:
    horizon: int
    point_values: tuple
    origin_tick: int


@dataclass(frozen=True)
class FitConfig:
    """Knobs for fit_arima. Defaults are what model refresh uses."""

    min_length: int = MIN_FIT_LENGTH
    long_ar_order: int | None = None
    max_iterations_per_param: int = 400
    xatol: float = 1e-7
    fatol: float = 1e-10


@dataclass(frozen=True)
class OrderScore:
    order: ArimaOrder
    model: ArimaModel
    css: float
    n_residuals: int
    score: float = field(default=math.inf)


# ============================================================================
# DIFFERENCING
# ============================================================================

def difference(series, d):
    """
    Return the d-th order difference of a series.

    Args:
        series (Series): Input samples
        d (int): Differencing degree, d >= 0

    Returns:
        Series: ``len(series) - d`` values starting ``d`` ticks later

    Raises:
        SeriesLengthError: If the series has ``d`` or fewer values

    Example:
        >>> difference(Series([1.0, 2.0, 4.0, 7.0]), 2).values
        (1.0, 1.0)
    """
    if d < 0:
        raise ValidationError("differencing degree must be non-negative")
    if d == 0:
        return series
    if len(series.values) <= d:
        raise SeriesLengthError(f"series of length {len(series.values)} cannot be differenced {d} times")
    diffed = np.diff(np.asarray(series.values, dtype=float), n=d)
    return Series(tuple(diffed.tolist()), series.start_tick + d, series.tick_seconds, series.offset_seconds)


def integrate(diffed, initial_values, d):
    """
    Invert ``difference``: rebuild a series from its d-th difference and its first d values.

    Args:
        diffed (Series): The d-th difference
        initial_values (Sequence[float]): First d values of the original series
        d (int): Differencing degree

    Returns:
        Series: The original series, starting d ticks before ``diffed``

    Raises:
        ArityError: If ``len(initial_values) != d``

    Example:
        >>> integrate(Series([0.0, 0.0]), [5.0], 1).values
        (5.0, 5.0, 5.0)
    """
    initial = [float(v) for v in initial_values]
    if len(initial) != d:
        raise ArityError(f"integration of degree {d} needs {d} initial values, got {len(initial)}")
    if d == 0:
        return diffed
    # first value of each difference level 0..d-1, taken from the initial values
    heads = [float(np.diff(np.asarray(initial), n=k)[0]) if k else initial[0] for k in range(d)]
    level = np.asarray(diffed.values, dtype=float)
    for k in range(d - 1, -1, -1):
        level = np.cumsum(np.concatenate(([heads[k]], level)))
    return Series(tuple(level.tolist()), diffed.start_tick - d, diffed.tick_seconds, diffed.offset_seconds)


# ============================================================================
# FITTING
# ============================================================================

def fit_arima(series, order, config=None):
    """
    Fit an ARIMA model by Hannan-Rissanen initialization and CSS refinement.

    Args:
        series (Series): Training samples
        order (ArimaOrder): Model order
        config (FitConfig, optional): Optimizer settings

    Returns:
        ArimaModel: Stationary and invertible fitted model

    Raises:
        SeriesLengthError: If the series is shorter than ``max(30, 10*(p+q)+d)``
        FitError: If no stationary, invertible model survives root reflection

    Example:
        >>> model = fit_arima(Series([7.0] * 40), ArimaOrder(0, 0, 0))
        >>> model.intercept, model.noise_variance
        (7.0, 0.0)
    """
    return _fit(series, ArimaOrder.parse(order), config or FitConfig()).model


def _fit(series, order, config):
    n = len(series.values)
    required = max(config.min_length, order.min_fit_length())
    if n < required:
        raise SeriesLengthError(f"order {order} needs at least {required} samples, got {n}")

    y = np.asarray(difference(series, order.d).values, dtype=float)
    intercept = float(np.mean(y))
    z = y - intercept
    p, q = order.p, order.q

    if p == 0 and q == 0:
        css = float(np.dot(z, z))
        model = ArimaModel(order, (), (), intercept, css / len(z), n)
        return OrderScore(order, model, css, len(z))

    start = _hannan_rissanen(z, p, q, config.long_ar_order)
    start = np.concatenate([np.asarray(_reflect(start[:p], -1.0)), np.asarray(_reflect(start[p:], 1.0))])

    def objective(params):
        ar, ma = params[:p], params[p:]
        if not (_roots_inside(ar, -1.0) and _roots_inside(ma, 1.0)):
            return np.inf
        resid = _css_residuals(z, ar, ma)
        return float(np.dot(resid, resid))

    result = minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={
            "maxiter": config.max_iterations_per_param * (p + q),
            "xatol": config.xatol,
            "fatol": config.fatol,
        },
    )
    params = result.x if np.isfinite(result.fun) else start
    ar = _reflect(params[:p], -1.0)
    ma = _reflect(params[p:], 1.0)
    if not (_roots_inside(ar, -1.0) and _roots_inside(ma, 1.0)):
        raise FitError(f"order {order}: optimizer result is not stationary/invertible after root reflection")

    resid = _css_residuals(z, np.asarray(ar), np.asarray(ma))
    css = float(np.dot(resid, resid))
    model = ArimaModel(order, ar, ma, intercept, css / len(resid), n)
    try:
        model.validate()
    except InvalidModelError as exc:
        raise FitError(f"order {order}: {exc}") from exc
    return OrderScore(order, model, css, len(resid))


def _lagmat(x, lags):
    """Rows t = lags..n-1, columns x[t-1], ..., x[t-lags]."""
    n = len(x)
    return np.column_stack([x[lags - i:n - i] for i in range(1, lags + 1)])


def _hannan_rissanen(z, p, q, long_order=None):
    n = len(z)
    if q == 0:
        coef, *_ = np.linalg.lstsq(_lagmat(z, p), z[p:], rcond=None)
        return coef

    if long_order is None:
        long_order = max(2 * max(p, q), min(int(np.log(n) ** 2), n // 4))
    m = long_order
    X = _lagmat(z, m)
    phi_long, *_ = np.linalg.lstsq(X, z[m:], rcond=None)
    proxy = z[m:] - X @ phi_long  # proxy[k] is the residual at time m + k

    rows = range(m + q, n)
    design = np.array(
        [[z[t - i] for i in range(1, p + 1)] + [proxy[t - j - m] for j in range(1, q + 1)] for t in rows]
    )
    coef, *_ = np.linalg.lstsq(design, z[m + q:], rcond=None)
    return coef


def _css_residuals(z, ar, ma):
    """One-step residuals conditioned on the first p values, zero pre-sample residuals."""
    p = len(ar)
    w = z[p:].copy()
    for i in range(1, p + 1):
        w -= ar[i - 1] * z[p - i:len(z) - i]
    if len(ma):
        return lfilter([1.0], np.r_[1.0, ma], w)
    return w


def _roots_inside(coeffs, sign):
    """True when the reciprocal polynomial roots lie strictly inside the unit circle."""
    if len(coeffs) == 0:
        return True
    lam = np.roots(np.r_[1.0, sign * np.asarray(coeffs, dtype=float)])
    return bool(np.all(np.abs(lam) < 1.0))


def _reflect(coeffs, sign):
    """Reflect offending polynomial roots into the stable region."""
    coeffs = np.asarray(coeffs, dtype=float)
    if len(coeffs) == 0:
        return ()
    lam = np.roots(np.r_[1.0, sign * coeffs])
    outside = np.abs(lam) >= 1.0
    if not outside.any():
        return tuple(coeffs.tolist())
    lam = np.where(outside, 1.0 / np.conj(lam), lam)
    poly = np.real(np.poly(lam))
    return tuple((sign * poly[1:]).tolist())


# ============================================================================
# ORDER SELECTION
# ============================================================================

def information_criterion(css, n_residuals, n_params, criterion="aic"):
    """AIC = n ln(CSS/n) + 2k, BIC = n ln(CSS/n) + ln(n) k with k = p + q + 1."""
    if css <= 0.0:
        fit_term = -math.inf
    else:
        fit_term = n_residuals * math.log(css / n_residuals)
    k = n_params + 1
    if criterion == "aic":
        return fit_term + 2.0 * k
    if criterion == "bic":
        return fit_term + math.log(n_residuals) * k
    raise ValidationError(f"unknown criterion {criterion!r}")


def score_orders(series, grid, criterion="aic", config=None):
    """Fit every order in the grid; return the successful fits with their scores."""
    config = config or FitConfig()
    scored = []
    for candidate in grid:
        order = ArimaOrder.parse(candidate)
        try:
            fitted = _fit(series, order, config)
        except (SeriesLengthError, FitError) as exc:
            logger.debug(f"order {order} skipped: {exc}")
            continue
        score = information_criterion(fitted.css, fitted.n_residuals, order.n_params, criterion)
        scored.append(OrderScore(order, fitted.model, fitted.css, fitted.n_residuals, score))
    return scored


def _best(scored):
    return min(scored, key=lambda s: (s.score, s.order.p + s.order.q, s.order.p))


def select_order(series, grid, criterion="aic", config=None):
    """
    Pick the order minimizing the information criterion.

    Ties are broken by smallest p + q, then smallest p.

    Raises:
        ValidationError: If the grid is empty
        SelectionError: If every candidate fails to fit
    """
    order, _ = select_and_fit(series, grid, criterion, config)
    return order


def select_and_fit(series, grid, criterion="aic", config=None):
    """Like select_order, but returns the winning ArimaModel too."""
    grid = list(grid)
    if not grid:
        raise ValidationError("order grid must not be empty")
    scored = score_orders(series, grid, criterion, config)
    if not scored:
        raise SelectionError(f"no order in {[str(ArimaOrder.parse(g)) for g in grid]} could be fitted")
    best = _best(scored)
    return best.order, best.model


# ============================================================================
# FORECASTING
# ============================================================================

def forecast(model, history, horizon):
    """
    Point forecasts ``horizon`` steps past the end of ``history``.

    Residuals before the start of the history window are taken as zero.

    Args:
        model (ArimaModel): Fitted model
        history (Series): Most recent samples, oldest first
        horizon (int): Number of steps, >= 1

    Returns:
        Forecast: ``horizon`` point values

    Raises:
        SeriesLengthError: If the history holds fewer than p + d samples

    Example:
        >>> m = ArimaModel(ArimaOrder(1, 0, 0), ar_coeffs=(0.5,))
        >>> forecast(m, Series([8.0]), 3).point_values
        (4.0, 2.0, 1.0)
    """
    if horizon < 1:
        raise ValidationError("forecast horizon must be at least 1")
    p, d, q = model.order.p, model.order.d, model.order.q
    values = list(history.values)
    if len(values) < p + d:
        raise SeriesLengthError(f"order {model.order} needs at least {p + d} history values")

    tails = []
    level = values
    for _ in range(d):
        tails.append(level[-1])
        level = [level[i + 1] - level[i] for i in range(len(level) - 1)]

    ar = model.ar_coeffs
    ma = model.ma_coeffs
    mu = model.intercept
    z = [v - mu for v in level]
    if len(z) < p:
        raise SeriesLengthError(f"order {model.order} needs at least {p + d} history values")

    e = [0.0] * len(z)
    for t in range(p, len(z)):
        acc = z[t]
        for i in range(1, p + 1):
            acc -= ar[i - 1] * z[t - i]
        for j in range(1, q + 1):
            if t - j >= 0:
                acc -= ma[j - 1] * e[t - j]
        e[t] = acc

    points = []
    for _ in range(horizon):
        acc = 0.0
        for i in range(1, p + 1):
            acc += ar[i - 1] * z[-i]
        for j in range(1, q + 1):
            if len(e) - j >= 0:
                acc += ma[j - 1] * e[-j]
        z.append(acc)
        e.append(0.0)
        value = acc + mu
        for k in range(d - 1, -1, -1):
            tails[k] = tails[k] + value
            value = tails[k]
        points.append(value)

    origin = history.start_tick + len(values) - 1
    return Forecast(horizon, tuple(points), origin)


def rolling_forecast_mse(model, series, horizon, first_origin, step=1, context=None):
    """
    Mean squared error of ``horizon``-step forecasts over rolling origins.

    The forecast at origin ``o`` sees ``series.values[:o]`` (optionally only
    the trailing ``context`` values) and is scored against the next
    ``horizon`` observations.
    """
    values = series.values
    errors = []
    for origin in range(first_origin, len(values) - horizon + 1, step):
        start = 0 if context is None else max(0, origin - context)
        history = Series(values[start:origin], series.start_tick + start, series.tick_seconds, series.offset_seconds)
        predicted = forecast(model, history, horizon).point_values
        errors.extend((a - b) ** 2 for a, b in zip(values[origin:origin + horizon], predicted))
    if not errors:
        raise SeriesLengthError("series too short for any forecast origin")
    return float(np.mean(errors))

