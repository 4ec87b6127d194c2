"""Synthetic epidemic-like data for demos and tests."""

from __future__ import annotations

import datetime as dt
import io

import numpy as np

REGIONS = ("AN", "AR", "AS", "IB", "CN", "CB", "CM", "CL", "CT", "CE",
           "VC", "EX", "GA", "MD", "ML", "MC", "NC", "PV", "RI")


def epidemic_cumulative_csv(n_days=80, regions=REGIONS, seed=0, start=dt.date(2020, 3, 20),
                            corrections=True):
    """A cumulative-count CSV in the ISO layout (``date,region,cases,deaths,recovered``).

    Each region follows a noisy, weekly-modulated single wave. With
    ``corrections`` a few cumulative values are revised downwards, as
    happens with real reporting.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_days)
    weekly = 1.0 + 0.3 * np.cos(2 * np.pi * t / 7)
    buf = io.StringIO()
    buf.write("date,region,cases,deaths,recovered\n")
    series = {}
    for region in regions:
        size = rng.uniform(20, 800)
        peak = rng.uniform(15, 45)
        width = rng.uniform(8, 18)
        curve = size * np.exp(-0.5 * ((t - peak) / width) ** 2) * weekly
        cases = rng.poisson(curve)
        deaths = rng.binomial(cases, 0.08)
        recovered = np.concatenate([np.zeros(10, dtype=np.int64), rng.binomial(cases[:-10], 0.8)])
        cum = np.column_stack([np.cumsum(cases), np.cumsum(deaths), np.cumsum(recovered)])
        if corrections:
            for _ in range(2):
                day = int(rng.integers(1, n_days))
                col = int(rng.integers(0, 3))
                cum[day, col] = max(0, cum[day, col] - int(rng.integers(1, 20)))
        series[region] = cum
    for day in range(n_days):
        date = (start + dt.timedelta(days=day)).isoformat()
        for region in regions:
            c, d, r = series[region][day]
            buf.write(f"{date},{region},{c},{d},{r}\n")
    return buf.getvalue()


def periodic_counts(n_days=120, n_series=6, period=7, seed=0):
    """Noiseless periodic counts, one amplitude and phase per series."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_days)
    cols = []
    for j in range(n_series):
        amp = rng.uniform(10, 300)
        phase = rng.integers(0, period)
        cols.append(np.rint(amp * (1.0 + np.sin(2 * np.pi * (t + phase) / period)) + 5))
    return np.column_stack(cols).astype(np.int64)
