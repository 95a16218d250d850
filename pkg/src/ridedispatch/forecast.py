"""Zone demand forecasting: weekly differencing, per-zone VAR, destination split."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demand import DemandSeries, hour_class, split_request
from .network import ZoneMap


class ForecastUnavailable(RuntimeError):
    pass


@dataclass
class DifferencedSeries:
    values: np.ndarray  # zones x periods, NaN before valid_from
    valid_from: int

    @property
    def season(self) -> int:
        return self.valid_from


def difference_weekly(counts, periods_per_day) -> DifferencedSeries:
    """delta[z, t] = d[z, t] - d[z, t - one week]; undefined for the first week."""
    if isinstance(counts, DemandSeries):
        counts = counts.counts
    d = np.asarray(counts, dtype=float)
    season = 7 * periods_per_day
    if d.shape[1] <= season:
        raise ForecastUnavailable(f"need more than {season} periods of history, have {d.shape[1]}")
    out = np.full_like(d, np.nan)
    out[:, season:] = d[:, season:] - d[:, :-season]
    return DifferencedSeries(out, season)


@dataclass
class VarModel:
    zone: int
    order: tuple  # zones making up the regressor vector, own zone first
    k: int
    coef: np.ndarray  # k x d, row l-1 multiplies the lag-l vector
    noise_var: float
    aic: tuple = ()

    @property
    def d(self) -> int:
        return len(self.order)


def min_samples(k_max: int, d: int) -> int:
    return k_max * d + 2 * k_max + 10


def _design(delta, order, k, rows):
    """Stack lagged neighbourhood vectors: columns [lag1 zones..., lag2 zones..., ...]."""
    return np.hstack([delta[list(order)][:, rows - lag].T for lag in range(1, k + 1)])


def _fit_orders(diff: DifferencedSeries, zone: int, neighbors, k_max):
    order = (zone, *sorted(int(z) for z in neighbors if z != zone))
    d = len(order)
    delta = diff.values
    first = diff.valid_from + k_max
    sub = delta[list(order)]
    rows = np.array(
        [t for t in range(first, delta.shape[1]) if not np.isnan(sub[:, t - k_max : t + 1]).any()], dtype=int
    )
    if len(rows) < min_samples(k_max, d):
        raise ForecastUnavailable(f"zone {zone}: {len(rows)} usable samples, need {min_samples(k_max, d)}")
    y = delta[zone, rows]
    n = len(rows)
    # RSS below this is numerical noise around an exact fit
    rss_floor = 1e-12 * float(y @ y) + 1e-300
    fits = []
    for k in range(1, k_max + 1):
        X = _design(delta, order, k, rows)
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ beta
        rss = max(float(resid @ resid), rss_floor)
        fits.append((n * math.log(rss / n) + 2 * k * d, beta.reshape(k, d), rss / n))
    return order, fits


def fit_var(diff: DifferencedSeries, zone: int, neighbors, k_max=8, k=None) -> VarModel:
    """Least-squares fit of the zone's differenced demand on lagged neighbourhood vectors.

    Every order 1..k_max is fit on the same sample (the last periods for which
    k_max lags exist) so AIC values are comparable. AIC is ``n ln(RSS/n) + 2 k d``;
    ties go to the smaller order. Pass ``k`` to force an order.
    """
    order, fits = _fit_orders(diff, zone, neighbors, k_max)
    aics = tuple(f[0] for f in fits)
    if k is None:
        k = 1 + min(range(k_max), key=lambda i: (aics[i], i))
    _, coef, var = fits[k - 1]
    return VarModel(zone, order, k, coef, var, aics)


def fit_var_system(diff: DifferencedSeries, zone_map: ZoneMap, k_max=8) -> dict:
    """Per-zone models sharing one lag order, chosen by the summed per-zone AIC."""
    per_zone = {z: _fit_orders(diff, z, zone_map.neighbors(z), k_max) for z in range(zone_map.n_zones)}
    total = [sum(fits[i][0] for _, fits in per_zone.values()) for i in range(k_max)]
    k = 1 + min(range(k_max), key=lambda i: (total[i], i))
    models = {}
    for z, (order, fits) in per_zone.items():
        _, coef, var = fits[k - 1]
        models[z] = VarModel(z, order, k, coef, var, tuple(f[0] for f in fits))
    return models


def predict_delta(model: VarModel, delta, t) -> float:
    lags = []
    for lag in range(1, model.k + 1):
        col = t - lag
        if col < 0 or col >= delta.shape[1]:
            raise ForecastUnavailable(f"lag {lag} of period {t} is outside the series")
        vec = delta[list(model.order), col]
        if np.isnan(vec).any():
            raise ForecastUnavailable(f"lag {lag} of period {t} is undefined")
        lags.append(vec)
    return float(sum(model.coef[l] @ lags[l] for l in range(model.k)))


def predict_zone(model: VarModel, diff: DifferencedSeries, counts, t: int) -> float:
    """Seasonal value one week back plus the VAR prediction of the weekly difference, floored at 0."""
    if isinstance(counts, DemandSeries):
        counts = counts.counts
    back = t - diff.season
    if back < 0 or back >= counts.shape[1]:
        raise ForecastUnavailable(f"no demand one week before period {t}")
    return max(0.0, float(counts[model.zone, back]) + predict_delta(model, diff.values, t))


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def assign_destinations(zone_counts, shares) -> np.ndarray:
    """Split per-zone forecasts over destinations; each pair rounded independently, clamped at 0."""
    lam = np.asarray(zone_counts, dtype=float)
    shares = np.asarray(shares, dtype=float)
    out = round_half_up(shares * lam[:, None])
    return np.maximum(out, 0).astype(np.int64)


def oracle_forecast(trips, period: int, period_seconds: int, zone_map: ZoneMap, capacity=4, offset=0) -> np.ndarray:
    """Exact zone-to-zone request counts (after splitting) for one period starting at ``offset``."""
    Z = zone_map.n_zones
    out = np.zeros((Z, Z), dtype=np.int64)
    lo = offset + period * period_seconds
    hi = lo + period_seconds
    for trip in trips:
        if lo <= trip.request_time < hi:
            out[zone_map.zone_of[trip.origin], zone_map.zone_of[trip.destination]] += len(
                split_request(trip, capacity)
            )
    return out


class VarForecaster:
    """Per-zone VAR models fit once on history, then rolled forward online.

    With ``bin_seconds`` larger than the series period (e.g. 3600 for hourly
    fits), counts are aggregated into bins before fitting and each bin's
    prediction is spread evenly over the periods it contains.
    """

    def __init__(self, series: DemandSeries, zone_map: ZoneMap, k_max=8, scale=1.0, bin_seconds=None,
                 order_selection="system"):
        if order_selection not in ("system", "zone"):
            raise ValueError(f"unknown order selection {order_selection!r}")
        self.order_selection = order_selection
        self.series = series
        self.zone_map = zone_map
        self.k_max = k_max
        self.scale = scale
        self.bin_seconds = bin_seconds or series.period_seconds
        if self.bin_seconds % series.period_seconds:
            raise ValueError("forecast bin must be a multiple of the demand period")
        self.per_bin = self.bin_seconds // series.period_seconds
        self.models = {}

    def _binned(self, end_period):
        c = self.series.counts[:, :end_period]
        nb = c.shape[1] // self.per_bin
        return c[:, : nb * self.per_bin].reshape(c.shape[0], nb, self.per_bin).sum(axis=2)

    @property
    def bins_per_day(self):
        return 86400 // self.bin_seconds

    def fit(self, end_period=None):
        end_period = self.series.counts.shape[1] if end_period is None else end_period
        counts = self._binned(end_period)
        diff = difference_weekly(counts, self.bins_per_day)
        if self.order_selection == "system":
            self.models = fit_var_system(diff, self.zone_map, self.k_max)
        else:
            self.models = {
                z: fit_var(diff, z, self.zone_map.neighbors(z), self.k_max) for z in range(self.zone_map.n_zones)
            }
        return self.models

    def zone_forecast(self, start_period, horizon) -> np.ndarray:
        """Predicted per-zone counts for ``horizon`` periods from ``start_period`` (exclusive of data after)."""
        if not self.models:
            raise ForecastUnavailable("forecaster has not been fit")
        first_bin = start_period // self.per_bin
        last_bin = (start_period + horizon - 1) // self.per_bin
        counts = self._binned(first_bin * self.per_bin).astype(float)
        season = 7 * self.bins_per_day
        Z = counts.shape[0]
        n_bins = last_bin + 1
        d = np.zeros((Z, n_bins))
        d[:, : counts.shape[1]] = counts
        delta = np.full((Z, n_bins), np.nan)
        if first_bin > season:
            delta[:, season:first_bin] = d[:, season:first_bin] - d[:, : first_bin - season]
        lam_bins = np.zeros((Z, n_bins))
        for b in range(first_bin, n_bins):
            if b - season < 0:
                raise ForecastUnavailable("no demand one week back")
            for z in range(Z):
                delta[z, b] = predict_delta(self.models[z], delta, b)
            lam_bins[:, b] = np.maximum(0.0, d[:, b - season] + delta[:, b])
        out = np.zeros((Z, horizon))
        for h in range(horizon):
            out[:, h] = lam_bins[:, (start_period + h) // self.per_bin] / self.per_bin
        return out * self.scale

    def forecast(self, start_period, horizon) -> np.ndarray:
        """Zone-to-zone integer forecast, shape (Z, Z, horizon)."""
        lam = self.zone_forecast(start_period, horizon)
        Z = lam.shape[0]
        out = np.zeros((Z, Z, horizon), dtype=np.int64)
        for h in range(horizon):
            t = (start_period + h) * self.series.period_seconds
            hc = hour_class(t, self.series.origin_weekday)
            shares = np.array([self.series.destination_shares(z, hc) for z in range(Z)])
            out[:, :, h] = assign_destinations(lam[:, h], shares)
        return out


def save_models(models, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for z, m in sorted(models.items()):
        lines = [f"# zone={m.zone} k={m.k} order={','.join(map(str, m.order))} noise_var={m.noise_var!r}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in m.coef]
        (directory / f"zone_{z}.txt").write_text("\n".join(lines) + "\n")


def load_models(directory) -> dict:
    models = {}
    for path in sorted(Path(directory).glob("zone_*.txt")):
        lines = path.read_text().splitlines()
        meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("# ").split())
        coef = np.array([[float(v) for v in ln.split()] for ln in lines[1:] if ln.strip()])
        order = tuple(int(v) for v in meta["order"].split(","))
        m = VarModel(int(meta["zone"]), order, int(meta["k"]), coef.reshape(int(meta["k"]), len(order)),
                     float(meta["noise_var"]))
        models[m.zone] = m
    return models
