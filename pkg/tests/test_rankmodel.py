import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from bss_usage.rankdist import rank_from_counts
from bss_usage.rankmodel import (
    RankCorrespondence,
    RankModelFit,
    RankPair,
    fit_rank_curve,
    model_closed_form,
    rank_correspondence,
    recurrence_iterate,
    should_fit,
    simulate_assignment,
)


def test_closed_form_hand_value():
    # (1 - 200) * 0.995**10 + 200
    expected = 200 - 199 * 0.995**10
    assert model_closed_form(10, 0.5, 1, 100) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(10.7291, abs=1e-4)


def test_recurrence_first_steps():
    s = recurrence_iterate(1, 0.5, 100, 3)
    assert s.tolist() == pytest.approx([1.0, 1.995, 1.995 + (100 - 0.5 * 1.995) / 100])


def test_closed_form_zero_offset_is_b():
    assert model_closed_form(0, 0.3, 7.0, 50) == pytest.approx(7.0)


@given(st.floats(0.01, 0.99), st.integers(2, 5000), st.floats(1, 100))
def test_closed_form_monotone_below_asymptote(a, M, b):
    x = np.arange(0, 400)
    y = model_closed_form(x, a, b, M)
    if b < M / a:
        assert np.all(np.diff(y) >= 0) and np.all(y <= M / a * (1 + 1e-12))


@pytest.mark.parametrize("a", [0.0, 1.0, -0.2])
def test_a_out_of_range(a):
    with pytest.raises(ValueError):
        model_closed_form(1, a, 1, 10)


def test_correspondence_dense_reranking():
    wd = rank_from_counts({"a": 9, "b": 8, "c": 7, "d": 6}, "weekday")
    we = rank_from_counts({"c": 5, "x": 4, "a": 3, "d": 1}, "weekend")
    corr = rank_correspondence(wd, we)
    assert [(p.station_id, p.x, p.y) for p in corr.pairs] == [("a", 1, 2), ("c", 2, 1), ("d", 3, 3)]
    assert (corr.N, corr.M_max) == (3, 3)


def test_correspondence_validation():
    with pytest.raises(ValueError):
        RankCorrespondence((RankPair("a", 1, 1), RankPair("a", 2, 2)), 2, 2)
    with pytest.raises(ValueError):
        RankCorrespondence((RankPair("a", 1, 1), RankPair("b", 2, 1)), 2, 2)
    with pytest.raises(ValueError):
        RankCorrespondence((RankPair("a", 1, 3),), 1, 2)


def rounded_pairs(a, b, M, n):
    x = np.arange(n)
    return x + 1, np.rint(model_closed_form(x, a, b, M))


def test_fit_agrees_with_scipy():
    rank, y = rounded_pairs(0.4, 20.0, 500, 700)
    y = y + np.random.default_rng(0).normal(0, 5, len(y))
    fit = fit_rank_curve(rank, y, 500)
    ref = least_squares(lambda q: y - model_closed_form(rank - 1, q[0], q[1], 500), [0.5, 10],
                        bounds=([0.01, 1], [0.99, np.inf]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    assert (fit.a, fit.b) == pytest.approx(ref.x, rel=1e-5)


def test_linear_data_is_flagged():
    rank = np.arange(1, 201)
    fit = fit_rank_curve(rank, rank.astype(float), 2000)
    assert fit.near_linear and fit.a == pytest.approx(0.01)


def test_predict_uses_offset_rank():
    fit = RankModelFit(0.5, 1.0, 100, 0.0, 10)
    assert fit.predict(11) == model_closed_form(10, 0.5, 1.0, 100)
    assert RankModelFit.from_dict(fit.to_dict()) == fit


def test_too_few_pairs():
    with pytest.raises(ValueError):
        fit_rank_curve(np.arange(1, 5), np.arange(1, 5), 10)


def test_london_excluded_unless_forced():
    assert not should_fit("LON") and should_fit("LON", force=True) and should_fit("NY")


def test_simulation_deterministic_and_seed_sensitive():
    a = simulate_assignment(150, 50, 0.5, seed=3, trials=500, block=128)
    b = simulate_assignment(150, 50, 0.5, seed=3, trials=500, block=128)
    c = simulate_assignment(150, 50, 0.5, seed=4, trials=500, block=128)
    assert np.array_equal(a.mean, b.mean) and not np.array_equal(a.mean, c.mean)
    assert a.mean[0] == 1.0 and a.stderr[0] == 0.0
    assert np.all(np.diff(a.mean) >= 0) and a.mean[-1] <= 150


def test_simulation_requires_more_weekday_than_weekend_ranks():
    with pytest.raises(ValueError):
        simulate_assignment(50, 50, 0.5)
