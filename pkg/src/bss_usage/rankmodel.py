"""Weekday vs weekend rank correspondence.

Mean-field model: walking down the weekday ranking, the matched weekend
rank S grows by (M - a*S) / M per step, where M is the largest weekend
rank.  With S(1) = S1 this solves to

    S(k) = (S1 - M/a) * (1 - a/M)**(k - 1) + M/a.

The fitted curve uses x = k - 1 so that y(0) = b:

    y(x) = (b - M/a) * (1 - a/M)**x + M/a.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fitting import DEFAULT_MAX_ITER, DEFAULT_XTOL, ConvergenceError, levenberg_marquardt
from .rankdist import RankDistribution

MIN_PAIRS = 10
A_BOUNDS = (0.01, 0.99)
# cities whose rankings are not fitted unless forced
EXCLUDED_CITIES = frozenset({"LON", "LONDON"})


@dataclass(frozen=True)
class RankPair:
    station_id: str
    x: int  # weekday rank
    y: int  # weekend rank


@dataclass(frozen=True)
class RankCorrespondence:
    pairs: tuple[RankPair, ...]
    N: int
    M_max: int

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        ids = [p.station_id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise ValueError("each station may appear once")
        xs, ys = self.x, self.y
        if len(set(xs.tolist())) != len(xs) or len(set(ys.tolist())) != len(ys):
            raise ValueError("weekday and weekend ranks must be distinct")
        if len(xs) and (xs.min() < 1 or xs.max() > self.N or ys.min() < 1 or ys.max() > self.M_max):
            raise ValueError("ranks out of range")

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.pairs], dtype=np.int64)

    @property
    def y(self) -> np.ndarray:
        return np.array([p.y for p in self.pairs], dtype=np.int64)

    def __len__(self):
        return len(self.pairs)


def rank_correspondence(weekday: RankDistribution, weekend: RankDistribution) -> RankCorrespondence:
    """Pair ranks of stations used in both day classes.

    Both sides are re-ranked densely (1..n) over the shared stations,
    keeping their original relative order.  Pairs are ordered by weekday rank.
    """
    if not len(weekday) or not len(weekend):
        raise ValueError("both rank distributions must be non-empty")
    common = set(weekday.stations) & set(weekend.stations)
    if not common:
        raise ValueError("no station is used on both weekdays and weekends")
    wd = [s for s in weekday.stations if s in common]
    we = {s: i + 1 for i, s in enumerate(s for s in weekend.stations if s in common)}
    pairs = [RankPair(s, i + 1, we[s]) for i, s in enumerate(wd)]
    return RankCorrespondence(tuple(pairs), len(wd), len(we))


def _check_a(a):
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must lie in (0, 1), got {a}")


def model_closed_form(x, a: float, b: float, M_max: float):
    """y(x) = (b - M/a) (1 - a/M)^x + M/a."""
    _check_a(a)
    if M_max < 1:
        raise ValueError("M_max must be >= 1")
    x = np.asarray(x, dtype=float)
    asym = M_max / a
    out = (b - asym) * np.exp(x * np.log1p(-a / M_max)) + asym
    return float(out) if out.ndim == 0 else out


def recurrence_iterate(S1: float, a: float, M_max: float, steps: int) -> np.ndarray:
    """<S(1)> = S1, <S(k)> = <S(k-1)> + (M - a <S(k-1)>) / M, for k up to ``steps``."""
    _check_a(a)
    if S1 < 1:
        raise ValueError("S1 must be >= 1")
    out = np.empty(steps)
    s = float(S1)
    for k in range(steps):
        out[k] = s
        s = s + (M_max - a * s) / M_max
    return out


@dataclass(frozen=True)
class RankModelFit:
    a: float
    b: float
    M_max: int
    rmse: float
    n_pairs: int
    iterations: int = 0
    near_linear: bool = False

    def __post_init__(self):
        _check_a(self.a)

    def predict(self, rank):
        """Predicted weekend rank for 1-based weekday rank(s)."""
        return model_closed_form(np.asarray(rank) - 1, self.a, self.b, self.M_max)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "M_max": self.M_max,
            "rmse": self.rmse,
            "n_pairs": self.n_pairs,
            "iterations": self.iterations,
            "near_linear": self.near_linear,
        }

    @classmethod
    def from_dict(cls, d) -> "RankModelFit":
        return cls(d["a"], d["b"], d["M_max"], d["rmse"], d["n_pairs"],
                   d.get("iterations", 0), d.get("near_linear", False))


def fit_rank_curve(
    rank,
    y,
    M_max: int,
    init: Sequence[float] | None = None,
    xtol: float = DEFAULT_XTOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RankModelFit:
    """Least-squares (a, b) for weekend ranks ``y`` at 1-based weekday ``rank``.

    ``a`` is kept in [0.01, 0.99].  A fit that ends on the lower bound means
    the data carry no visible curvature (a/M_max -> 0, y close to linear in
    x) and is flagged ``near_linear``.
    """
    x = np.asarray(rank, dtype=float) - 1.0
    y = np.asarray(y, dtype=float)
    if len(x) < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} pairs, got {len(x)}")
    M = float(M_max)
    if init is None:
        a0 = 0.5
        head = max(3, len(x) // 20)
        b0 = float(np.clip(np.median(y[np.argsort(x)][:head] - x[np.argsort(x)][:head]), 1.0, M))
        p0 = [a0, b0]
    else:
        p0 = list(init)
    lower = np.array([A_BOUNDS[0], 1.0])
    upper = np.array([A_BOUNDS[1], np.inf])

    def residuals(q):
        a, b = q
        return y - ((b - M / a) * np.exp(x * np.log1p(-a / M)) + M / a)

    def jacobian(q):
        a, b = q
        qx = np.exp(x * np.log1p(-a / M))
        qx1 = np.exp((x - 1.0) * np.log1p(-a / M))
        dy_db = qx
        dy_da = -(M / a**2) * (1.0 - qx) - (b - M / a) * x * qx1 / M
        return -np.column_stack([dy_da, dy_db])

    res = levenberg_marquardt(residuals, jacobian, p0, lower, upper, xtol, max_iter)
    a, b = (float(v) for v in res.params)
    near_linear = a <= A_BOUNDS[0] * (1 + 1e-9)
    fit = RankModelFit(a, b, int(M_max), res.rmse, len(x), res.iterations, near_linear)
    if not res.converged:
        raise ConvergenceError(f"rank model fit did not converge in {max_iter} iterations", fit)
    return fit


def fit_rank_model(corr: RankCorrespondence, init=None, **kw) -> RankModelFit:
    return fit_rank_curve(corr.x, corr.y, corr.M_max, init=init, **kw)


def should_fit(city: str, force: bool = False) -> bool:
    return force or city.upper() not in EXCLUDED_CITIES


@dataclass(frozen=True)
class Simulation:
    k: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trials: int


def simulate_assignment(
    N: int,
    M_max: int,
    a: float,
    S1: float = 1.0,
    seed: int = 0,
    trials: int = 10_000,
    block: int = 10_000,
) -> Simulation:
    """Monte Carlo of the sequential occupancy process behind the recurrence.

    Each trial starts at S1; at weekday rank k the weekend rank advances by
    one with probability clip((M - a*S) / M, 0, 1).  Trials run in blocks
    with child seeds spawned from ``seed``, so the result depends only on
    (seed, trials, block).
    """
    _check_a(a)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if N <= M_max:
        raise ValueError("the occupancy model assumes N > M_max")
    if S1 < 1:
        raise ValueError("S1 must be >= 1")
    total = np.zeros(N)
    total_sq = np.zeros(N)
    n_blocks = -(-trials // block)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    for b, child in enumerate(children):
        size = min(block, trials - b * block)
        rng = np.random.default_rng(child)
        s = np.full(size, float(S1))
        for k in range(N):
            total[k] += s.sum()
            total_sq[k] += (s * s).sum()
            prob = np.clip((M_max - a * s) / M_max, 0.0, 1.0)
            s = s + (rng.random(size) < prob)
    mean = total / trials
    if trials > 1:
        var = np.maximum(total_sq - trials * mean**2, 0.0) / (trials - 1)
        stderr = np.sqrt(var / trials)
    else:
        stderr = np.zeros(N)
    return Simulation(np.arange(1, N + 1), mean, stderr, trials)
