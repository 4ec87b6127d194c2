"""Negative Binomial predictives from a Poisson likelihood with a Gamma prior.

The network's point guess ``y_hat`` is the prior mean of the Poisson rate,
with a prior worth one observation: ``rate ~ Gamma(shape=y_hat, rate=1)``.
Integrating the rate out gives

* at an observed count ``y_obs``: NB(r = y_hat + y_obs, q = 2/3)
* at an unobserved cell:          NB(r = y_hat,         q = 1/2)

with ``P(Y = y) = Gamma(r + y) / (y! Gamma(r)) q^r (1 - q)^y``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

SHAPE_FLOOR = 1e-6
PRIOR_SAMPLE_SIZE = 1.0
Q_POSTERIOR = 2.0 / 3.0
Q_PRIOR = 0.5


class Flavor(enum.Enum):
    POSTERIOR = "posterior"
    PRIOR = "prior"
    DEGENERATE_ZERO = "degenerate_zero"


@dataclass(frozen=True)
class NegBinParams:
    r: float
    q: float
    flavor: Flavor

    @property
    def gamma_rate(self):
        """Rate of the Gamma mixing distribution over the Poisson mean."""
        return self.q / (1.0 - self.q)


def _check_y_hat(y_hat):
    if not y_hat >= 0 or not math.isfinite(y_hat):
        raise ValueError(f"point guess must be finite and >= 0, got {y_hat!r}")


def posterior_predictive_params(y_hat, y_obs):
    _check_y_hat(y_hat)
    if y_obs < 0 or int(y_obs) != y_obs:
        raise ValueError(f"observed count must be a non-negative integer, got {y_obs!r}")
    if y_hat < SHAPE_FLOOR and y_obs == 0:
        return NegBinParams(SHAPE_FLOOR, Q_POSTERIOR, Flavor.DEGENERATE_ZERO)
    r = max(float(y_hat), SHAPE_FLOOR) + float(y_obs)
    return NegBinParams(r, Q_POSTERIOR, Flavor.POSTERIOR)


def prior_predictive_params(y_hat):
    _check_y_hat(y_hat)
    if y_hat < SHAPE_FLOOR:
        return NegBinParams(SHAPE_FLOOR, Q_PRIOR, Flavor.DEGENERATE_ZERO)
    return NegBinParams(float(y_hat), Q_PRIOR, Flavor.PRIOR)


def nb_logpmf(params, y):
    y = np.asarray(y)
    if params.flavor is Flavor.DEGENERATE_ZERO:
        return np.where(y == 0, 0.0, -np.inf)
    r, q = params.r, params.q
    return (gammaln(r + y) - gammaln(y + 1.0) - gammaln(r)
            + r * math.log(q) + y * math.log1p(-q))


def nb_pmf(params, y):
    out = np.exp(nb_logpmf(params, y))
    return float(out) if np.ndim(out) == 0 else out


def nb_moments(params):
    if params.flavor is Flavor.DEGENERATE_ZERO:
        return 0.0, 0.0
    mean = params.r * (1.0 - params.q) / params.q
    return mean, mean / params.q


def nb_cdf_table(params, tail=1e-12):
    """Cumulative probabilities for y = 0, 1, ... until the upper tail is below ``tail``."""
    if params.flavor is Flavor.DEGENERATE_ZERO:
        return np.ones(1)
    mean, var = nb_moments(params)
    n = int(mean + 12.0 * math.sqrt(var) + 20)
    while True:
        cdf = np.cumsum(nb_pmf(params, np.arange(n)))
        if cdf[-1] >= 1.0 - tail:
            return cdf
        n *= 2


def nb_quantile(params, p):
    """Smallest ``y`` with ``CDF(y) >= p``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    cdf = nb_cdf_table(params)
    return int(min(np.searchsorted(cdf, p, side="left"), len(cdf) - 1))


def nb_sample(params, rng, size=None):
    """Gamma-Poisson draws: ``lam ~ Gamma(r, rate)``, ``Y ~ Poisson(lam)``."""
    if params.flavor is Flavor.DEGENERATE_ZERO:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    lam = rng.gamma(params.r, 1.0 / params.gamma_rate, size=size)
    return rng.poisson(lam)


@dataclass(frozen=True)
class PredictiveCell:
    key: object
    day: int
    params: NegBinParams
    y_hat: float
    y_obs: int | None = None


def build_predictive_grid(point, panel):
    """One predictive cell per (day, series) of a point forecast.

    Observed days get the posterior predictive given that day's count,
    forecast days get the prior predictive.
    """
    D = len(panel.keys)
    if point.values.shape[1] != D:
        raise ValueError(
            f"point forecast has {point.values.shape[1]} series, panel has {D}"
        )
    T = panel.values.shape[0]
    cells = []
    for row, day in enumerate(point.days):
        observed = bool(point.observed[row])
        if observed and not 0 <= day < T:
            raise ValueError(f"observed day {day} outside panel range [0, {T})")
        for key in panel.keys:
            y_hat = float(point.values[row, key.flat_index])
            if observed:
                y_obs = int(panel.values[day, key.flat_index])
                params = posterior_predictive_params(y_hat, y_obs)
            else:
                y_obs = None
                params = prior_predictive_params(y_hat)
            cells.append(PredictiveCell(key, int(day), params, y_hat, y_obs))
    return cells


def write_grid_csv(cells, path, dates=None):
    """Export cells as ``day,region,feature,flavor,r,q,mean,var,y_obs``.

    ``dates`` maps day indices to labels; indices are written otherwise.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "region", "feature", "flavor", "r", "q", "mean", "var", "y_obs"])
        for cell in cells:
            mean, var = nb_moments(cell.params)
            day = dates(cell.day) if dates else cell.day
            writer.writerow([
                day, cell.key.region, cell.key.feature.value, cell.params.flavor.value,
                repr(cell.params.r), repr(cell.params.q), repr(mean), repr(var),
                "" if cell.y_obs is None else cell.y_obs,
            ])
