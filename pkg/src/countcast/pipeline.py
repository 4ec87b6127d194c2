"""Point guesses -> predictive grid -> ensemble -> derived quantities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import build_predictive_grid
from .data import FEATURES, DataError, Feature
from .ensemble import (
    NATIONAL,
    aggregate_national,
    band,
    crude_R,
    cumulative_paths,
    draw_ensemble,
)
from .lstm import PointForecast, forecast_horizon, predict_onestep_all

QUANTITIES = ("daily", "cumulative", "R")


@dataclass
class ForecastRun:
    point: PointForecast
    grid: list
    ensemble: object
    offset: np.ndarray

    @property
    def days(self):
        return self.ensemble.days


def check_keys(model, panel):
    model_keys = [(k.region, k.feature) for k in model.keys]
    panel_keys = [(k.region, k.feature) for k in panel.keys]
    if model_keys != panel_keys:
        raise DataError("panel series do not match the series the model was trained on")


def run_forecast(model, panel, horizon=30, n_draws=1000, seed=0):
    check_keys(model, panel)
    onestep = predict_onestep_all(model, panel)
    future = forecast_horizon(model, panel, horizon)
    point = PointForecast(
        days=np.concatenate([onestep.days, future.days]),
        values=np.vstack([onestep.values, future.values]),
        observed=np.concatenate([onestep.observed, future.observed]),
    )
    grid = build_predictive_grid(point, panel)
    ens = draw_ensemble(grid, n_draws, seed)
    # running totals start from everything reported before the first predicted day
    offset = panel.values[:model.k].sum(axis=0).astype(float)
    return ForecastRun(point, grid, ens, offset)


def scope_quantities(run, scope):
    """Draw-level arrays ``(n, days)`` keyed by ``(feature, quantity)`` for one scope."""
    ens = run.ensemble
    cum = cumulative_paths(ens, run.offset)
    if scope == NATIONAL:
        daily_ens = aggregate_national(ens)
        cum_ens = aggregate_national(cum)
    else:
        daily_ens, cum_ens = ens, cum
    out = {}
    for feature in FEATURES:
        try:
            out[(feature, "daily")] = daily_ens.series(scope, feature)
        except KeyError:
            continue
        out[(feature, "cumulative")] = cum_ens.series(scope, feature)
    if (Feature.CASES, "daily") in out:
        out[(Feature.CASES, "R")] = crude_R(daily_ens, scope).values
    return out


def scope_bands(run, scope, level=0.95):
    return {
        key: band(values, level, days=run.days)
        for key, values in scope_quantities(run, scope).items()
    }
