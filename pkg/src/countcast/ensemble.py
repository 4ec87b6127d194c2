"""Monte Carlo ensembles drawn from the predictive grid, and what is derived from them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bayes import nb_sample
from .data import FEATURES, Feature, SeriesKey

NATIONAL = "ES"


@dataclass
class Ensemble:
    """``draws[n, day, series]``; ``days`` are panel day indices."""

    draws: np.ndarray
    days: np.ndarray
    keys: list

    @property
    def n_draws(self):
        return self.draws.shape[0]

    def series(self, region, feature):
        for key in self.keys:
            if key.region == region and key.feature is feature:
                return self.draws[:, :, key.flat_index]
        raise KeyError(f"no series {region}/{feature.value} in ensemble")

    def restrict_days(self, days):
        mask = np.isin(self.days, days)
        return Ensemble(self.draws[:, mask], self.days[mask], self.keys)


def cell_rng(seed, day, series):
    """Independent generator for one grid cell, stable under reordering."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(day), int(series))))


def draw_ensemble(grid, n=1000, seed=0):
    if n < 1:
        raise ValueError("n must be >= 1")
    days = np.array(sorted({c.day for c in grid}), dtype=np.int64)
    keys = sorted({c.key for c in grid}, key=lambda k: k.flat_index)
    col = {k.flat_index: j for j, k in enumerate(keys)}
    row = {d: i for i, d in enumerate(days.tolist())}
    draws = np.zeros((n, len(days), len(keys)), dtype=np.int64)
    for cell in grid:
        rng = cell_rng(seed, cell.day, cell.key.flat_index)
        draws[:, row[cell.day], col[cell.key.flat_index]] = nb_sample(cell.params, rng, size=n)
    keys = [SeriesKey(k.region, k.feature, j) for j, k in enumerate(keys)]
    return Ensemble(draws, days, keys)


def cumulative_paths(ens, offset=None):
    """Running totals along days per draw, starting from ``offset`` per series."""
    paths = np.cumsum(ens.draws, axis=1).astype(float)
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (len(ens.keys),):
            raise ValueError(f"offset needs {len(ens.keys)} entries, got {offset.shape}")
        paths += offset
    return Ensemble(paths, ens.days, ens.keys)


def aggregate_national(ens, scope=NATIONAL):
    """Sum draws over regions, separately for each feature, draw by draw."""
    features = [f for f in FEATURES if any(k.feature is f for k in ens.keys)]
    out = np.zeros(ens.draws.shape[:2] + (len(features),), dtype=ens.draws.dtype)
    for j, feature in enumerate(features):
        for key in ens.keys:
            if key.feature is feature:
                out[:, :, j] += ens.draws[:, :, key.flat_index]
    keys = [SeriesKey(scope, f, j) for j, f in enumerate(features)]
    return Ensemble(out, ens.days, keys)


@dataclass
class ReproductionSeries:
    """Ratio of consecutive daily cases per draw; NaN where undefined."""

    values: np.ndarray  # (n, days)
    days: np.ndarray
    scope: str


def crude_R(ens, scope=NATIONAL):
    if scope == NATIONAL and not any(k.region == NATIONAL for k in ens.keys):
        ens = aggregate_national(ens)
    cases = ens.series(scope, Feature.CASES).astype(float)
    R = np.full(cases.shape, np.nan)
    prev, cur = cases[:, :-1], cases[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        R[:, 1:] = np.where(prev > 0, cur / np.where(prev > 0, prev, 1.0), np.nan)
    return ReproductionSeries(R, ens.days, scope)


@dataclass
class CredibleBand:
    level: float
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    days: np.ndarray


def nearest_rank_index(p, m):
    """0-based index of the type-1 empirical ``p``-quantile of ``m`` sorted values."""
    # 1e-9 keeps e.g. 0.025 * 1000 from rounding up to rank 26
    return np.clip(np.ceil(p * m - 1e-9).astype(np.int64) - 1, 0, None)


def band(draws, level=0.95, days=None):
    """Equal-tail band over the draw axis (axis 0); NaN draws are ignored.

    Accepts an :class:`Ensemble`, a :class:`ReproductionSeries` or an array
    of shape ``(n, days, ...)``. Cells with no defined draw come out NaN.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if isinstance(draws, (Ensemble, ReproductionSeries)):
        days = draws.days
        draws = draws.draws if isinstance(draws, Ensemble) else draws.values
    x = np.asarray(draws, dtype=float)
    defined = ~np.isnan(x)
    m = defined.sum(axis=0)
    ordered = np.sort(x, axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.where(m > 0, np.nansum(x, axis=0) / np.maximum(m, 1), np.nan)

    def quantile(p):
        idx = np.minimum(nearest_rank_index(p, m), np.maximum(m - 1, 0))
        q = np.take_along_axis(ordered, idx[None], axis=0)[0]
        return np.where(m > 0, q, np.nan)

    return CredibleBand(
        level=level,
        mean=mean,
        lower=quantile((1.0 - level) / 2.0),
        upper=quantile((1.0 + level) / 2.0),
        days=np.arange(x.shape[1]) if days is None else np.asarray(days),
    )


BAND_HEADER = ["day", "scope", "feature", "quantity", "mean", "lower", "upper", "level"]


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def band_rows(b, scope, feature, quantity, day_label=str):
    """CSV rows for one band; ``b.mean`` is ``(days,)`` for a single series."""
    for i, day in enumerate(b.days):
        yield [day_label(int(day)), scope, feature, quantity,
               _fmt(b.mean[i]), _fmt(b.lower[i]), _fmt(b.upper[i]), repr(b.level)]


def write_band_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BAND_HEADER)
        writer.writerows(rows)
