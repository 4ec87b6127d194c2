"""Probabilistic forecasting of daily count panels.

A bidirectional LSTM provides point guesses; each guess is used as the
prior mean of a Poisson-Gamma model, giving Negative Binomial predictive
distributions that are simulated to obtain bands for derived quantities.
"""

from .bayes import (
    Flavor,
    NegBinParams,
    build_predictive_grid,
    nb_moments,
    nb_pmf,
    nb_quantile,
    nb_sample,
    posterior_predictive_params,
    prior_predictive_params,
)
from .data import (
    ColumnMapping,
    CountPanel,
    DataError,
    Feature,
    LogCountScaler,
    SeriesKey,
    parse_cumulative_csv,
    to_daily_increments,
)
from .ensemble import aggregate_national, band, crude_R, cumulative_paths, draw_ensemble
from .lstm import (
    BiLSTMForecaster,
    BiLstmModel,
    TrainConfig,
    count_parameters,
    forecast_horizon,
    load_model,
    predict_onestep_all,
    save_model,
    train,
)
from .pipeline import run_forecast
from .scenario import ScenarioSpec, apply_scenario, run_scenario

__version__ = "0.1.0"
