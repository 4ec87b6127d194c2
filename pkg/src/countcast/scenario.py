"""What-if scenarios: perturb recent history, keep the fitted model, compare ensembles."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

import numpy as np

from .data import DataError, Feature
from .ensemble import NATIONAL, band
from .pipeline import run_forecast, scope_quantities


@dataclass(frozen=True)
class ScenarioSpec:
    region: str
    feature: Feature = Feature.CASES
    window_days: int = 10
    daily_multiplier: float = 1.2
    compound: bool = True
    label: str = "scenario"

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")
        if not (math.isfinite(self.daily_multiplier) and self.daily_multiplier > 0):
            raise ValueError("daily_multiplier must be finite and > 0")


class SpecError(DataError):
    def __init__(self, field, message):
        super().__init__(f"scenario field {field!r}: {message}")
        self.field = field


def parse_scenario_spec(text):
    """Parse a flat ``key = value`` scenario file."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise SpecError("<file>", str(exc)) from None
    values = dict(parser["scenario"])
    known = {"region", "feature", "window_days", "daily_multiplier", "compound", "label"}
    for name in values:
        if name not in known:
            raise SpecError(name, "unknown field")
    if not values.get("region"):
        raise SpecError("region", "required")
    kwargs = {"region": values["region"]}
    if "feature" in values:
        try:
            kwargs["feature"] = Feature.parse(values["feature"])
        except DataError:
            raise SpecError("feature", f"unknown feature {values['feature']!r}") from None
    for name, cast in (("window_days", int), ("daily_multiplier", float)):
        if name in values:
            try:
                kwargs[name] = cast(values[name])
            except ValueError:
                raise SpecError(name, f"cannot parse {values[name]!r}") from None
    if "compound" in values:
        try:
            kwargs["compound"] = parser.getboolean("scenario", "compound")
        except ValueError:
            raise SpecError("compound", f"not a boolean: {values['compound']!r}") from None
    if "label" in values:
        kwargs["label"] = values["label"]
    try:
        return ScenarioSpec(**kwargs)
    except ValueError as exc:
        name = str(exc).split()[0]
        raise SpecError(name, str(exc)) from None


def apply_scenario(panel, spec):
    """Scale the last ``window_days`` observed counts of one series.

    With ``compound`` the d-th day of the window (d = 1..N) is multiplied
    by ``multiplier ** d``, otherwise by ``multiplier``. Results are
    rounded half up.
    """
    try:
        col = panel.index_of(spec.region, spec.feature)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from None
    T = panel.values.shape[0]
    N = spec.window_days
    if N > T:
        raise DataError(f"scenario window of {N} days exceeds {T} observed days")
    values = panel.values.copy()
    ranks = np.arange(1, N + 1, dtype=float)
    factors = spec.daily_multiplier ** ranks if spec.compound else np.full(N, spec.daily_multiplier)
    scaled = values[T - N:, col] * factors
    values[T - N:, col] = np.floor(scaled + 0.5).astype(values.dtype)
    return panel.with_values(values)


@dataclass
class ScenarioImpact:
    """Baseline, perturbed and draw-matched difference bands.

    Each mapping is keyed by ``(scope, feature, quantity)``.
    """

    spec: ScenarioSpec
    days: np.ndarray
    baseline: dict
    perturbed: dict
    difference: dict


def run_scenario(model, panel, spec, horizon=30, n_draws=1000, seed=0, level=0.95, scopes=None):
    """Forecast the panel with and without the perturbation under one seed.

    Differences are taken draw by draw over the scenario window and the
    forecast horizon, for daily counts and cumulative totals.
    """
    perturbed_panel = apply_scenario(panel, spec)
    base = run_forecast(model, panel, horizon, n_draws, seed)
    pert = run_forecast(model, perturbed_panel, horizon, n_draws, seed)
    T = panel.values.shape[0]
    keep = base.days >= T - spec.window_days
    days = base.days[keep]
    if scopes is None:
        scopes = panel.regions + [NATIONAL]
    baseline, perturbed, difference = {}, {}, {}
    for scope in scopes:
        qb = scope_quantities(base, scope)
        qp = scope_quantities(pert, scope)
        for (feature, quantity), b_draws in qb.items():
            if quantity == "R":
                continue
            p_draws = qp[(feature, quantity)]
            key = (scope, feature, quantity)
            baseline[key] = band(b_draws[:, keep], level, days)
            perturbed[key] = band(p_draws[:, keep], level, days)
            difference[key] = band(p_draws[:, keep] - b_draws[:, keep], level, days)
    return ScenarioImpact(spec, days, baseline, perturbed, difference)
