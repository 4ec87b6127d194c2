import numpy as np
import pytest

from countcast.data import DataError, Feature
from countcast.ensemble import NATIONAL
from countcast.pipeline import run_forecast, scope_bands
from countcast.scenario import (
    ScenarioSpec,
    SpecError,
    apply_scenario,
    parse_scenario_spec,
    run_scenario,
)

from conftest import make_panel


def panel_with_last(values_last, T=6):
    values = np.full((T, 3), 50, dtype=np.int64)
    values[T - len(values_last):, 0] = values_last
    return make_panel(values, regions=["MD"] * 3)


def test_identity_multiplier():
    panel = panel_with_last([100, 100, 100])
    out = apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 3, 1.0))
    np.testing.assert_array_equal(out.values, panel.values)


def test_single_day():
    panel = panel_with_last([10])
    out = apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 1, 1.2))
    assert out.values[-1, 0] == 12


def test_compounding():
    panel = panel_with_last([100, 100, 100])
    out = apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 3, 1.2))
    assert out.values[-3:, 0].tolist() == [120, 144, 173]


def test_flat_multiplier():
    panel = panel_with_last([100, 100, 100])
    out = apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 3, 1.2, compound=False))
    assert out.values[-3:, 0].tolist() == [120, 120, 120]


def test_round_half_up():
    panel = panel_with_last([5])
    assert apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 1, 1.5)).values[-1, 0] == 8


def test_touches_exactly_window_of_one_series():
    rng = np.random.default_rng(0)
    values = rng.integers(1, 100, size=(20, 6))
    panel = make_panel(values, regions=["MD"] * 3 + ["CT"] * 3)
    out = apply_scenario(panel, ScenarioSpec("CT", Feature.DEATHS, 7, 1.3))
    changed = out.values != panel.values
    assert changed.sum() == 7
    assert changed[:, 4].sum() == 7 and changed[-7:, 4].all()


def test_unknown_series():
    panel = panel_with_last([1])
    with pytest.raises(DataError):
        apply_scenario(panel, ScenarioSpec("XX", Feature.CASES, 1, 1.2))
    with pytest.raises(DataError):
        apply_scenario(panel, ScenarioSpec("MD", Feature.CASES, 99, 1.2))


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("MD", window_days=0)
    with pytest.raises(ValueError):
        ScenarioSpec("MD", daily_multiplier=0.0)


def test_parse_spec():
    spec = parse_scenario_spec(
        "region = MD\nfeature = deaths\nwindow_days = 10\n"
        "daily_multiplier = 1.2\ncompound = false\nlabel = Madrid +20%\n"
    )
    assert spec == ScenarioSpec("MD", Feature.DEATHS, 10, 1.2, False, "Madrid +20%")


@pytest.mark.parametrize("text, field", [
    ("region = MD\nwindow_days = ten\n", "window_days"),
    ("region = MD\nfeature = hospital\n", "feature"),
    ("feature = cases\n", "region"),
    ("region = MD\ncompound = maybe\n", "compound"),
    ("region = MD\ndaily_multiplier = -1\n", "daily_multiplier"),
    ("region = MD\ncolour = red\n", "colour"),
])
def test_parse_spec_errors_name_field(text, field):
    with pytest.raises(SpecError) as err:
        parse_scenario_spec(text)
    assert err.value.field == field
    assert field in str(err.value)


def test_identity_scenario_zero_impact(small_model, epidemic_panel):
    spec = ScenarioSpec("MD", Feature.CASES, 5, 1.0)
    impact = run_scenario(small_model, epidemic_panel, spec, horizon=4, n_draws=50, seed=3)
    assert impact.difference
    for b in impact.difference.values():
        for arr in (b.mean, b.lower, b.upper):
            assert (arr == 0).all()
    for key, b in impact.baseline.items():
        np.testing.assert_array_equal(b.mean, impact.perturbed[key].mean)


def test_scenario_days_and_scopes(small_model, epidemic_panel):
    spec = ScenarioSpec("MD", Feature.CASES, 5, 1.2)
    impact = run_scenario(small_model, epidemic_panel, spec, horizon=4, n_draws=50, seed=3)
    T = epidemic_panel.values.shape[0]
    assert impact.days.tolist() == list(range(T - 5, T + 4))
    scopes = {k[0] for k in impact.difference}
    assert scopes == {"AN", "MD", "CT", NATIONAL}
    assert {k[2] for k in impact.difference} == {"daily", "cumulative"}
    md = impact.difference[("MD", Feature.CASES, "daily")]
    assert (md.mean[:5] > 0).all()


def test_scenario_deterministic(small_model, epidemic_panel):
    spec = ScenarioSpec("MD", Feature.CASES, 5, 1.2)
    a = run_scenario(small_model, epidemic_panel, spec, horizon=3, n_draws=30, seed=8)
    b = run_scenario(small_model, epidemic_panel, spec, horizon=3, n_draws=30, seed=8)
    for key in a.difference:
        np.testing.assert_array_equal(a.difference[key].mean, b.difference[key].mean)
        np.testing.assert_array_equal(a.difference[key].upper, b.difference[key].upper)


def test_forecast_run_bands(small_model, epidemic_panel):
    run = run_forecast(small_model, epidemic_panel, horizon=5, n_draws=40, seed=1)
    T = epidemic_panel.values.shape[0]
    assert run.days.tolist() == list(range(small_model.k, T + 5))
    bands = scope_bands(run, NATIONAL)
    assert set(bands) == {(f, q) for f in Feature for q in ("daily", "cumulative")} | {
        (Feature.CASES, "R")}
    cum = bands[(Feature.CASES, "cumulative")]
    assert (np.diff(cum.lower) >= 0).all() and (cum.lower <= cum.upper).all()
    for b in bands.values():
        ok = ~np.isnan(b.lower)
        assert (b.lower[ok] <= b.upper[ok]).all()
