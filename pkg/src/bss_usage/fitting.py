"""Damped Gauss-Newton (Levenberg-Marquardt) with box projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_XTOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass
class LMResult:
    params: np.ndarray
    cost: float  # 0.5 * sum of squared residuals
    iterations: int
    converged: bool
    n_residuals: int

    @property
    def rmse(self) -> float:
        return float(np.sqrt(2.0 * self.cost / self.n_residuals))


class ConvergenceError(RuntimeError):
    """Iteration limit reached; ``best`` holds the lowest-cost parameters."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


def levenberg_marquardt(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    lower=None,
    upper=None,
    xtol: float = DEFAULT_XTOL,
    max_iter: int = DEFAULT_MAX_ITER,
    lam0: float = 1e-3,
) -> LMResult:
    """Minimize 0.5 * ||residuals(p)||^2.

    Damping is Marquardt's diagonal scaling, lam * diag(J^T J), so badly
    scaled parameters need no manual rescaling.  Each trial step is
    projected onto [lower, upper].  Converges when every parameter moves by
    less than ``xtol`` relative to its magnitude on an accepted step, or
    when no step can reduce the cost any further.
    """
    p = np.asarray(p0, dtype=float).copy()
    lo = np.full_like(p, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full_like(p, np.inf) if upper is None else np.asarray(upper, dtype=float)
    p = np.clip(p, lo, hi)

    r = residuals(p)
    cost = 0.5 * float(r @ r)
    lam = lam0
    it = 0
    while it < max_iter:
        it += 1
        J = jacobian(p)
        g = J.T @ r
        # parameters on a bound whose descent direction leaves the box stay put
        free = ~(((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0)))
        A = (J.T @ J)[np.ix_(free, free)]
        diag = np.maximum(np.diag(A), 1e-300)
        while True:
            step = np.zeros_like(p)
            try:
                step[free] = -np.linalg.solve(A + lam * np.diag(diag), g[free])
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = np.clip(p + step, lo, hi)
                r_trial = residuals(trial)
                cost_trial = 0.5 * float(r_trial @ r_trial)
                if np.isfinite(cost_trial) and cost_trial <= cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left: stationary point (possibly on a bound)
                return LMResult(p, cost, it, True, len(r))
        moved = np.abs(trial - p)
        stalled = cost_trial == cost
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10.0, 1e-12)
        if stalled or np.all(moved <= xtol * (np.abs(p) + xtol)):
            return LMResult(p, cost, it, True, len(r))
    return LMResult(p, cost, it, False, len(r))
