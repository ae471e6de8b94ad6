import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bss_usage.divergence import (
    DivergenceError,
    SupportError,
    js_divergence,
    jsd_day_matrix,
    jsd_matrix,
    kl_divergence,
)
from bss_usage.ingest import DAY_NAMES
from bss_usage.timeseries import from_counts


def mp_kl(p, q):
    mpmath.mp.dps = 40
    return float(sum(mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b), 2)
                     for a, b in zip(p, q) if a > 0))


def mp_js(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]
    return 0.5 * mp_kl(p, m) + 0.5 * mp_kl(q, m)


def test_kl_known_value():
    assert kl_divergence([0.25, 0.75], [0.5, 0.5]) == pytest.approx(0.18872187554086717, abs=1e-12)


def test_kl_support_violation():
    with pytest.raises(SupportError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_kl_zero_mass_in_p_is_ignored():
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)


@pytest.mark.parametrize("p,q", [([0.5, 0.6], [0.5, 0.5]), ([-0.1, 1.1], [0.5, 0.5]),
                                 ([0.5, 0.5], [1.0]), ([], []), ([np.nan, 1], [0.5, 0.5])])
def test_invalid_inputs(p, q):
    with pytest.raises(DivergenceError):
        js_divergence(p, q)


def test_disjoint_support_is_one():
    assert js_divergence([1, 0, 0], [0, 0.5, 0.5]) == 1.0


def simplex(n_min=2, n_max=64):
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(np.float64, n, elements=st.floats(0, 1e3)).filter(lambda a: a.sum() > 0)
    ).map(lambda a: a / a.sum())


@given(simplex().flatmap(lambda p: st.tuples(st.just(p), arrays(np.float64, len(p), elements=st.floats(0, 1e3))
                                             .filter(lambda a: a.sum() > 0).map(lambda a: a / a.sum()))))
@settings(max_examples=150, deadline=None)
def test_js_matches_high_precision_oracle(pq):
    p, q = pq
    p, q = p / p.sum(), q / q.sum()
    assert js_divergence(p, q) == pytest.approx(mp_js(p, q), abs=1e-12)


@given(simplex(2, 30))
@settings(max_examples=100, deadline=None)
def test_kl_matches_oracle_with_full_support(p):
    q = np.full(len(p), 1 / len(p))
    assert kl_divergence(p, q) == pytest.approx(mp_kl(p, q), abs=1e-12)


def test_matrix_symmetric_zero_diagonal():
    rng = np.random.default_rng(0)
    vecs = [v / v.sum() for v in rng.random((5, 24))]
    m = jsd_matrix(list("abcde"), vecs)
    assert np.array_equal(m.values, m.values.T)
    assert not np.diag(m.values).any()
    assert m["a", "c"] == js_divergence(vecs[0], vecs[2])


def _day(day, counts):
    return from_counts("X", day, "rental", 60, counts)


def test_day_matrix_ordering_and_empty_day():
    rng = np.random.default_rng(1)
    dists = [_day(d, rng.integers(1, 50, 24)) for d in reversed(DAY_NAMES)]
    m = jsd_day_matrix(dists)
    assert m.labels == DAY_NAMES
    dists[0] = _day("Sun", np.zeros(24, dtype=int))
    with pytest.raises(DivergenceError):
        jsd_day_matrix(dists)
    with pytest.raises(ValueError):
        jsd_day_matrix(dists[:6])
