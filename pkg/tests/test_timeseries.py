from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bss_usage.ingest import UsageEvent
from bss_usage.timeseries import (
    RENTAL,
    RETURN,
    build_distribution,
    day_class_of,
    distribution_set,
    from_counts,
)


def ev(s, r=1, ret=0, station="A"):
    return UsageEvent(datetime.fromisoformat(s), station, r, ret)


def test_single_hour_distribution():
    # 2023-10-16 is a Monday
    events = [ev("2023-10-16T08:05"), ev("2023-10-16T08:55", 2), ev("2023-10-16T17:00")]
    d = build_distribution(events, "X", "Mon")
    assert d.total_count == 4
    assert d.probs[8] == 0.75 and d.probs[17] == 0.25
    assert d.probs.sum() == 1.0


def test_bin_edges():
    events = [ev("2023-10-16T00:00"), ev("2023-10-16T23:59")]
    d = build_distribution(events, "X", "Mon", bin_width=15)
    assert d.n_bins == 96 and d.probs[0] == d.probs[95] == 0.5


def test_direction_selection():
    events = [ev("2023-10-16T08:00", 1, 0), ev("2023-10-16T09:00", 0, 3)]
    assert build_distribution(events, "X", "Mon", RETURN).probs[9] == 1.0
    assert build_distribution(events, "X", "Mon", "combined").total_count == 4


def test_empty_day_is_all_zero():
    d = build_distribution([ev("2023-10-16T08:00")], "X", "Tue")
    assert d.is_empty and not d.probs.any()


def test_weekday_selector():
    events = [ev("2023-10-16T08:00"), ev("2023-10-21T08:00")]  # Mon, Sat
    assert build_distribution(events, "X", "Weekday").total_count == 1
    assert build_distribution(events, "X", "Weekend").total_count == 1


@pytest.mark.parametrize("bad", [0, 7, -60, 1441])
def test_bin_width_must_divide_day(bad):
    with pytest.raises(ValueError):
        build_distribution([], "X", "Mon", bin_width=bad)


def test_unknown_selector():
    with pytest.raises(ValueError):
        build_distribution([], "X", "Monday")


def test_probs_read_only():
    d = from_counts("X", "Mon", RENTAL, 60, np.ones(24, dtype=int))
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_day_class():
    assert [day_class_of(d) for d in ("Fri", "Sat", "Sun")] == ["weekday", "weekend", "weekend"]


events_st = st.lists(
    st.tuples(st.integers(0, 14 * 1440 - 1), st.integers(0, 3), st.integers(0, 3)).filter(
        lambda t: t[1] + t[2] > 0),
    max_size=200,
    unique_by=lambda t: t[0],
).map(lambda xs: [UsageEvent(datetime(2023, 10, 16) + timedelta(minutes=m), "A", r, q) for m, r, q in xs])


@given(events_st, st.sampled_from([1, 5, 15, 30, 60, 120, 1440]))
@settings(max_examples=60, deadline=None)
def test_counts_round_trip_and_normalization(events, width):
    dists = distribution_set(events, "X", width)
    assert len(dists) == 14
    total = 0
    for d in dists.values():
        assert d.n_bins == 1440 // width
        if not d.is_empty:
            assert abs(d.probs.sum() - 1) <= 1e-12
        assert d.counts.sum() == d.total_count
        if d.direction == RENTAL:
            total += d.total_count
            assert np.array_equal(d.counts, build_distribution(events, "X", d.day, RENTAL, width).counts)
    assert total == sum(e.rentals for e in events)
