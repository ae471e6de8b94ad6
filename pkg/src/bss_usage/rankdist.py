"""Docking-station rank distributions and the truncated power law

    P(k) = C * k**(-alpha) * exp(-beta * k**gamma)

fitted by least squares on log P(k).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fitting import DEFAULT_MAX_ITER, DEFAULT_XTOL, ConvergenceError, levenberg_marquardt
from .ingest import WEEKDAY, WEEKEND, Calendar, UsageEvent, day_class

MIN_RANKS = 10
# (log C, alpha, beta, gamma)
LOWER = np.array([-np.inf, 0.0, 0.0, 0.1])
UPPER = np.array([np.inf, 5.0, 1.0, 5.0])


@dataclass(frozen=True)
class RankEntry:
    rank: int
    station_id: str
    count: int
    proportion: float


@dataclass(frozen=True)
class RankDistribution:
    day_class: str
    entries: tuple[RankEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ranks = [e.rank for e in self.entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError("ranks must be 1..N in order")
        props = self.proportions
        if np.any(np.diff(props) > 0):
            raise ValueError("proportions must be non-increasing in rank")
        if len(props) and abs(props.sum() - 1.0) > 1e-9:
            raise ValueError("proportions must sum to 1")

    def __len__(self):
        return len(self.entries)

    @property
    def ranks(self) -> np.ndarray:
        return np.array([e.rank for e in self.entries], dtype=float)

    @property
    def proportions(self) -> np.ndarray:
        return np.array([e.proportion for e in self.entries], dtype=float)

    @property
    def stations(self) -> list[str]:
        return [e.station_id for e in self.entries]

    def rank_of(self) -> dict[str, int]:
        return {e.station_id: e.rank for e in self.entries}


def rank_from_counts(counts: dict[str, int], day_class: str) -> RankDistribution:
    """Sort stations by count descending, ties by station id ascending."""
    items = sorted(((s, c) for s, c in counts.items() if c > 0), key=lambda sc: (-sc[1], sc[0]))
    total = sum(c for _, c in items)
    entries = [RankEntry(i + 1, s, c, c / total) for i, (s, c) in enumerate(items)]
    return RankDistribution(day_class, entries)


def rank_stations(
    events: Iterable[UsageEvent], day_class_: str, calendar: Calendar | None = None
) -> RankDistribution:
    """Rank stations by rentals + returns on dates of one day class."""
    if day_class_ not in (WEEKDAY, WEEKEND):
        raise ValueError(f"day class must be {WEEKDAY!r} or {WEEKEND!r}")
    classify = calendar.classify if calendar is not None else day_class
    counts = Counter()
    for e in events:
        if classify(e.minute.date()) == day_class_:
            counts[e.station_id] += e.total
    if not counts:
        raise ValueError(f"no {day_class_} events to rank")
    return rank_from_counts(counts, day_class_)


@dataclass(frozen=True)
class RankFit:
    alpha: float
    beta: float
    gamma: float
    norm_const: float
    rmse_log: float
    n_ranks: int
    iterations: int = 0
    excluded_ranks: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma <= 0 or self.norm_const <= 0:
            raise ValueError("need alpha, beta >= 0 and gamma, norm_const > 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "norm_const": self.norm_const,
            "rmse_log": self.rmse_log,
            "n_ranks": self.n_ranks,
            "iterations": self.iterations,
            "excluded_ranks": list(self.excluded_ranks),
        }

    @classmethod
    def from_dict(cls, d) -> "RankFit":
        return cls(
            d["alpha"], d["beta"], d["gamma"], d["norm_const"], d["rmse_log"],
            d["n_ranks"], d.get("iterations", 0), tuple(d.get("excluded_ranks", ())),
        )


def evaluate_rank_model(fit: RankFit, k):
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("rank must be >= 1")
    out = fit.norm_const * k ** (-fit.alpha) * np.exp(-fit.beta * k**fit.gamma)
    return float(out) if out.ndim == 0 else out


def log_model(params, k):
    log_c, alpha, beta, gamma = params
    return log_c - alpha * np.log(k) - beta * k**gamma


def initial_guess(k: np.ndarray, logp: np.ndarray) -> np.ndarray:
    """alpha from the log-log slope of the top 10% of ranks, gamma = 2, and
    beta such that the cut-off halves the model at k = N/2."""
    n_head = max(3, int(np.ceil(0.1 * len(k))))
    slope = np.polyfit(np.log(k[:n_head]), logp[:n_head], 1)[0]
    alpha = float(np.clip(-slope, LOWER[1], UPPER[1]))
    gamma = 2.0
    beta = float(np.clip(np.log(2.0) / (k.max() / 2.0) ** gamma, LOWER[2], UPPER[2]))
    log_c = float(np.mean(logp + alpha * np.log(k) + beta * k**gamma))
    return np.array([log_c, alpha, beta, gamma])


def fit_rank_curve(
    k,
    p,
    init: Sequence[float] | None = None,
    xtol: float = DEFAULT_XTOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RankFit:
    """Fit (C, alpha, beta, gamma) to proportions ``p`` at ranks ``k``.

    ``init`` is an optional (alpha, beta, gamma) starting point.  Ranks with
    zero proportion cannot enter a log-space fit and are excluded.
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    excluded = tuple(int(x) for x in k[~keep])
    k, p = k[keep], p[keep]
    if len(k) < MIN_RANKS:
        raise ValueError(f"need at least {MIN_RANKS} ranks with usage, got {len(k)}")
    logp = np.log(p)
    lnk = np.log(k)

    p0 = initial_guess(k, logp)
    if init is not None:
        alpha, beta, gamma = init
        p0[1:] = np.clip([alpha, beta, gamma], LOWER[1:], UPPER[1:])
        p0[0] = float(np.mean(logp + p0[1] * lnk + p0[2] * k ** p0[3]))

    def residuals(q):
        return logp - log_model(q, k)

    def jacobian(q):
        _, _, beta, gamma = q
        kg = k**gamma
        # d(residual)/dq = -d(model)/dq
        return -np.column_stack([np.ones_like(k), -lnk, -kg, -beta * kg * lnk])

    res = levenberg_marquardt(residuals, jacobian, p0, LOWER, UPPER, xtol, max_iter)
    log_c, alpha, beta, gamma = (float(x) for x in res.params)
    fit = RankFit(alpha, beta, gamma, float(np.exp(log_c)), res.rmse, len(k), res.iterations, excluded)
    if not res.converged:
        raise ConvergenceError(f"rank fit did not converge in {max_iter} iterations", fit)
    return fit


def fit_rank_distribution(dist: RankDistribution, init=None, **kw) -> RankFit:
    return fit_rank_curve(dist.ranks, dist.proportions, init=init, **kw)
