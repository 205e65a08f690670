"""True-loss lower-probability bounds from gap-prediction residuals.

Given ``n`` held-out residuals ``delta_i = gap_i - NC(h_i)``, the probability
that a fresh hypothesis has ``|L_true - L_train| <= NC(h) + eps`` is at least

    1 - #{i : delta_i > eps} / n - 2 * sqrt(ln(2 / delta) / (2 n)),

a consequence of the Dvoretzky-Kiefer-Wolfowitz inequality (with Massart's
constant) applied to the residual distribution.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InfeasibleError


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    delta: float
    n: int
    count_exceeding: int
    probability_lower_bound: float
    unclamped: float

    def to_record(self) -> dict:
        return asdict(self)


def _residuals(residuals) -> np.ndarray:
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if r.size < 1:
        raise ValueError("need at least one residual")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    return r


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def dkw_band(n: int, delta: float) -> float:
    """Half-width ``sqrt(ln(2/delta) / (2n))`` of the uniform ECDF band."""
    _check_delta(delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def bound_value(n: int, count: int, delta: float) -> float:
    """Unclamped bound for ``count`` violations among ``n`` residuals."""
    return 1.0 - count / n - 2.0 * dkw_band(n, delta)


def compute_bound(residuals, epsilon: float, delta: float) -> BoundReport:
    r = _residuals(residuals)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    _check_delta(delta)
    count = int(np.count_nonzero(r > epsilon))
    raw = bound_value(r.size, count, delta)
    return BoundReport(float(epsilon), float(delta), int(r.size), count,
                       min(max(raw, 0.0), 1.0), raw)


def empirical_cdf(residuals, x) -> float | np.ndarray:
    """Fraction of residuals ``<= x``; vectorized over ``x``."""
    r = np.sort(_residuals(residuals))
    out = np.searchsorted(r, np.asarray(x, dtype=np.float64), side="right") / r.size
    return float(out) if np.ndim(out) == 0 else out


def sup_deviation(samples, cdf) -> float:
    """Exact ``sup_x |F_n(x) - F(x)|`` for a continuous reference ``cdf``."""
    x = np.sort(_residuals(samples))
    n = x.size
    F = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def epsilon_for_target(residuals, delta: float, target_prob: float) -> float:
    """Smallest candidate ``eps`` whose bound reaches ``target_prob``.

    Candidates are the smallest positive double plus every positive residual;
    between consecutive candidates the violation count is constant, so this
    scan is exhaustive.
    """
    r = _residuals(residuals)
    _check_delta(delta)
    best = min(max(bound_value(r.size, 0, delta), 0.0), 1.0)
    if best < target_prob:
        raise InfeasibleError(
            f"target {target_prob} unreachable with n={r.size}, delta={delta}: "
            f"maximum achievable bound is {best:.6f}"
        )
    candidates = np.concatenate([[np.nextafter(0.0, 1.0)], np.unique(r[r > 0])])
    srt = np.sort(r)
    counts = r.size - np.searchsorted(srt, candidates, side="right")
    raw = 1.0 - counts / r.size - 2.0 * dkw_band(r.size, delta)
    ok = np.minimum(np.maximum(raw, 0.0), 1.0) >= target_prob
    return float(candidates[np.argmax(ok)])


def event_frequency(gaps, predictions, epsilon: float) -> float:
    """Fraction of pairs with ``|gap| <= prediction + epsilon``."""
    g = np.asarray(gaps, dtype=np.float64)
    f = np.asarray(predictions, dtype=np.float64)
    return float(np.mean(np.abs(g) <= f + epsilon))
