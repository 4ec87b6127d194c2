import math

import numpy as np
import pytest

from countcast.bayes import (
    Flavor,
    NegBinParams,
    PredictiveCell,
    nb_moments,
    nb_quantile,
    posterior_predictive_params,
)
from countcast.data import Feature, SeriesKey
from countcast.ensemble import (
    Ensemble,
    aggregate_national,
    band,
    crude_R,
    cumulative_paths,
    draw_ensemble,
    nearest_rank_index,
)


def ens_from(draws, regions=("A",), features=(Feature.CASES,)):
    draws = np.asarray(draws)
    keys = [SeriesKey(r, f, i) for i, (r, f) in enumerate((r, f) for r in regions for f in features)]
    return Ensemble(draws, np.arange(draws.shape[1]), keys)


def cells(params_by_day, regions=("A",)):
    out = []
    for day, params in enumerate(params_by_day):
        for j, p in enumerate(params):
            out.append(PredictiveCell(SeriesKey(regions[j], Feature.CASES, j), day, p, 0.0))
    return out


POST6 = NegBinParams(6.0, 2 / 3, Flavor.POSTERIOR)


def test_draw_determinism_and_shape():
    grid = cells([[POST6, POST6]] * 3, regions=("A", "B"))
    a = draw_ensemble(grid, 50, seed=9)
    b = draw_ensemble(grid, 50, seed=9)
    assert a.draws.shape == (50, 3, 2)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, draw_ensemble(grid, 50, seed=10).draws)


def test_draw_cells_independent_streams():
    grid = cells([[POST6, POST6]], regions=("A", "B"))
    e = draw_ensemble(grid, 200, seed=1)
    assert not np.array_equal(e.draws[:, 0, 0], e.draws[:, 0, 1])


def test_draw_stream_stable_under_grid_order():
    grid = cells([[POST6, POST6]] * 2, regions=("A", "B"))
    a = draw_ensemble(grid, 20, seed=4)
    b = draw_ensemble(grid[::-1], 20, seed=4)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_draw_mean_within_mc_error():
    e = draw_ensemble(cells([[POST6]]), 1000, seed=3)
    mean, var = nb_moments(POST6)
    assert abs(e.draws.mean() - mean) < 3 * math.sqrt(var / 1000)


def test_draw_degenerate_column():
    degen = posterior_predictive_params(0.0, 0)
    e = draw_ensemble(cells([[POST6, degen]], regions=("A", "B")), 100, seed=0)
    assert not e.draws[:, :, 1].any()


def test_draw_n_positive():
    with pytest.raises(ValueError):
        draw_ensemble(cells([[POST6]]), 0)


def test_cumulative_paths():
    ens = ens_from([[[1], [2], [3]]])
    out = cumulative_paths(ens, [10])
    assert out.draws[0, :, 0].tolist() == [11, 13, 16]
    zero = cumulative_paths(ens_from(np.zeros((2, 4, 1), dtype=int)), [7])
    assert (zero.draws == 7).all()


def test_cumulative_telescopes_and_monotone():
    rng = np.random.default_rng(0)
    draws = rng.poisson(5, size=(30, 12, 2))
    ens = ens_from(draws, regions=("A", "B"))
    offset = np.array([100.0, 3.0])
    cum = cumulative_paths(ens, offset)
    np.testing.assert_array_equal(cum.draws[:, -1], offset + draws.sum(axis=1))
    assert (np.diff(cum.draws, axis=1) >= 0).all()


def test_aggregate_national():
    draws = np.zeros((1, 1, 4), dtype=int)
    draws[0, 0] = [3, 1, 4, 2]
    ens = ens_from(draws, regions=("A", "B"), features=(Feature.CASES, Feature.DEATHS))
    nat = aggregate_national(ens)
    assert [k.region for k in nat.keys] == ["ES", "ES"]
    assert nat.draws[0, 0].tolist() == [7, 3]


def test_aggregate_linearity_and_commutes_with_cumulation():
    rng = np.random.default_rng(1)
    draws = rng.poisson(4, size=(50, 6, 6))
    ens = ens_from(draws, regions=("A", "B"), features=tuple(Feature))
    nat = aggregate_national(ens)
    np.testing.assert_allclose(nat.draws.mean(axis=0)[:, 0],
                               draws.mean(axis=0)[:, [0, 3]].sum(axis=1))
    offset = rng.integers(0, 100, size=6).astype(float)
    a = cumulative_paths(aggregate_national(ens), aggregate_national(
        ens_from(offset[None, None], regions=("A", "B"), features=tuple(Feature))).draws[0, 0])
    b = aggregate_national(cumulative_paths(ens, offset))
    np.testing.assert_array_equal(a.draws, b.draws)


def test_national_variance_is_sum_of_regional():
    grid = cells([[POST6, NegBinParams(20.0, 2 / 3, Flavor.POSTERIOR)]], regions=("A", "B"))
    e = draw_ensemble(grid, 20_000, seed=2)
    nat = aggregate_national(e).draws[:, 0, 0]
    expected = nb_moments(POST6)[1] + nb_moments(NegBinParams(20.0, 2 / 3, Flavor.POSTERIOR))[1]
    # sample-variance standard error is about var * sqrt(2 / n) for near-normal draws
    assert abs(nat.var() - expected) < 5 * expected * math.sqrt(2 / 20_000)


def test_crude_R():
    r = crude_R(ens_from([[[10], [20], [10]]]), "A")
    assert math.isnan(r.values[0, 0])
    assert r.values[0, 1:].tolist() == [2.0, 0.5]
    const = crude_R(ens_from([[[5], [5], [5], [5]]]), "A")
    assert const.values[0, 1:].tolist() == [1.0, 1.0, 1.0]


def test_crude_R_zero_denominator_excluded():
    r = crude_R(ens_from([[[0], [3], [6]], [[2], [4], [4]]]), "A")
    assert math.isnan(r.values[0, 1])
    b = band(r, 0.95)
    assert b.mean[1] == 2.0 and b.lower[1] == 2.0 and b.upper[1] == 2.0
    assert b.mean[2] == pytest.approx(1.5)


def test_crude_R_national():
    draws = np.array([[[1, 1], [2, 4]]])
    r = crude_R(ens_from(draws, regions=("A", "B")))
    assert r.values[0, 1] == 3.0


def test_band_constant():
    b = band(np.full((100, 3, 2), 7.0), 0.95)
    for arr in (b.mean, b.lower, b.upper):
        assert (arr == 7.0).all()


def test_band_nearest_rank():
    draws = np.arange(1, 1001, dtype=float)[:, None]
    b = band(draws, 0.95)
    assert b.lower[0] == 25 and b.upper[0] == 975 and b.mean[0] == 500.5


def test_nearest_rank_index():
    assert nearest_rank_index(0.025, np.array(1000)) == 24
    assert nearest_rank_index(0.975, np.array(1000)) == 974
    assert nearest_rank_index(0.5, np.array(1)) == 0


def test_band_skewed_mean_outside():
    draws = np.concatenate([np.ones(990), np.full(10, 1e4)])[:, None]
    b = band(draws, 0.95)
    assert b.lower[0] <= b.upper[0] < b.mean[0]


def test_band_no_defined_values():
    b = band(np.full((5, 1), np.nan))
    assert math.isnan(b.mean[0]) and math.isnan(b.lower[0])


@pytest.mark.parametrize("r", [6.0, 20.0])
def test_band_contains_exact_interval(r):
    p = NegBinParams(r, 2 / 3, Flavor.POSTERIOR)
    e = draw_ensemble(cells([[p]]), 1000, seed=int(r))
    b = band(e, 0.95)
    assert abs(b.lower[0, 0] - nb_quantile(p, 0.025)) <= 1
    assert abs(b.upper[0, 0] - nb_quantile(p, 0.975)) <= 1
