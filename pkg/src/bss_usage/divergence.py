"""Kullback-Leibler and Jensen-Shannon divergences (log base 2)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import DAY_NAMES

NORM_TOL = 1e-9


class DivergenceError(ValueError):
    pass


class SupportError(DivergenceError):
    """p has mass where q has none, so D_KL(p || q) is unbounded."""


def _as_prob(v, name) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise DivergenceError(f"{name} must be a non-empty vector")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise DivergenceError(f"{name} has negative or non-finite entries")
    if abs(a.sum() - 1.0) > NORM_TOL:
        raise DivergenceError(f"{name} sums to {a.sum()!r}, not 1")
    return a


def _pair(p, q):
    p = _as_prob(p, "p")
    q = _as_prob(q, "q")
    if p.shape != q.shape:
        raise DivergenceError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def _kl_terms(p: np.ndarray, q: np.ndarray) -> float:
    # 0 log(0/q) = 0: only evaluate the log where p > 0
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def kl_divergence(p, q) -> float:
    p, q = _pair(p, q)
    if np.any((p > 0) & (q == 0)):
        raise SupportError("p_i > 0 where q_i = 0")
    # rounding can leave tiny negatives when p == q
    return max(_kl_terms(p, q), 0.0)


def js_divergence(p, q) -> float:
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    # summing the two halves in a fixed order keeps js(p, q) == js(q, p)
    a = _kl_terms(p, m)
    b = _kl_terms(q, m)
    d = 0.5 * (a + b) if a <= b else 0.5 * (b + a)
    return min(max(d, 0.0), 1.0)


@dataclass(frozen=True)
class JsdMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        n = len(self.labels)
        if v.shape != (n, n):
            raise ValueError("values must be square and match labels")

    def __getitem__(self, key):
        i, j = key
        return self.values[self.labels.index(i), self.labels.index(j)]


def jsd_matrix(labels: Sequence[str], vectors: Sequence) -> JsdMatrix:
    """Pairwise JSD; each unordered pair is evaluated once and mirrored."""
    n = len(labels)
    if len(vectors) != n:
        raise ValueError("one vector per label")
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            vals[i, j] = vals[j, i] = js_divergence(vectors[i], vectors[j])
    return JsdMatrix(tuple(labels), vals)


def jsd_day_matrix(dists) -> JsdMatrix:
    """7x7 matrix over one city's Mon..Sun distributions.

    ``dists`` is a sequence of seven DayDistributions in any order, or a
    mapping from day name to DayDistribution.
    """
    if isinstance(dists, dict):
        dists = list(dists.values())
    by_day = {d.day: d for d in dists}
    if sorted(by_day) != sorted(DAY_NAMES) or len(dists) != 7:
        raise ValueError("need exactly one distribution per day Mon..Sun")
    ordered = [by_day[d] for d in DAY_NAMES]
    if len({d.bin_width for d in ordered}) != 1:
        raise ValueError("distributions differ in bin_width")
    empty = [d.day for d in ordered if d.is_empty]
    if empty:
        raise DivergenceError(f"empty distributions for {empty}")
    return jsd_matrix(DAY_NAMES, [d.probs for d in ordered])
