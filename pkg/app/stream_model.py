"""
Event probabilities and log-space combinatorial kernels shared by the analytic modules.

Every C(n, k) p^a q^b product is accumulated as a natural log and exponentiated
once; sums of such terms go through scipy's logsumexp.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from app.models import SessionParams

NEG_INF = float("-inf")


@dataclass(frozen=True)
class LogProb:
    """A probability stored as its natural logarithm; zero is negative infinity."""

    value: float

    def __post_init__(self):
        if self.value > 1e-12:
            raise ValueError(f"log-probability {self.value} is above 0")

    @classmethod
    def from_prob(cls, prob: float) -> "LogProb":
        if prob <= 0.0:
            return cls(NEG_INF)
        return cls(math.log(prob))

    @property
    def prob(self) -> float:
        return min(1.0, math.exp(self.value))

    @property
    def is_zero(self) -> bool:
        return self.value == NEG_INF


def event_probs_from_load(rho: float) -> Tuple[float, float]:
    """Arrival and departure probabilities of the embedded chain at traffic load rho."""
    if rho < 0:
        raise ValueError(f"traffic load must be nonnegative, got {rho}")
    # Compute the smaller of the two directly so p + q rounds to exactly 1.
    if rho <= 1.0:
        p = rho / (1.0 + rho)
        return p, 1.0 - p
    q = 1.0 / (1.0 + rho)
    return 1.0 - q, q


def event_probs(params: SessionParams) -> Tuple[float, float]:
    return event_probs_from_load(params.rho)


def log_binom(n: int, k: int, exact: bool = False) -> float:
    """
    Natural log of the binomial coefficient C(n, k).

    Args:
        n: Population size, n >= 0
        k: Selection size; out-of-range k gives a zero coefficient
        exact: Use big-integer arithmetic instead of log-gamma

    Returns:
        ln C(n, k), or negative infinity when k < 0 or k > n
    """
    if k < 0 or k > n:
        return NEG_INF
    if exact:
        return math.log(math.comb(n, k))
    k = min(k, n - k)
    return float(gammaln(n + 1) - (gammaln(k + 1) + gammaln(n - k + 1)))


def first_emptiness_log(k: int, start_level: int, p: float, q: float) -> float:
    """Log of the probability that a buffer holding start_level frames first empties at departure k."""
    if start_level < 1:
        raise ValueError(f"start level must be at least 1, got {start_level}")
    if k < start_level:
        return NEG_INF
    steps = 2 * k - start_level
    return (
        math.log(start_level) - math.log(steps)
        + log_binom(steps, k - start_level)
        + float(xlogy(k - start_level, p))
        + float(xlogy(k, q))
    )


def first_emptiness_prob(k: int, start_level: int, p: float, q: float) -> float:
    return LogProb(min(0.0, first_emptiness_log(k, start_level, p, q))).prob


def first_emptiness_log_kernel(start_level: int, horizon: int, p: float, q: float) -> np.ndarray:
    """
    Vectorised first_emptiness_log over departure indices 0..horizon.

    Entries below start_level are negative infinity.
    """
    if start_level < 1:
        raise ValueError(f"start level must be at least 1, got {start_level}")
    out = np.full(horizon + 1, NEG_INF)
    if horizon < start_level:
        return out
    k = np.arange(start_level, horizon + 1, dtype=float)
    steps = 2.0 * k - start_level
    rises = k - start_level
    # symmetric form keeps C(T, 0) at exactly zero in log space
    log_coeff = gammaln(steps + 1.0) - (gammaln(rises + 1.0) + gammaln(steps - rises + 1.0))
    out[start_level:] = (
        math.log(start_level) - np.log(steps) + log_coeff + xlogy(rises, p) + xlogy(k, q)
    )
    return out


def first_emptiness_kernel(start_level: int, horizon: int, p: float, q: float) -> np.ndarray:
    return np.minimum(1.0, np.exp(first_emptiness_log_kernel(start_level, horizon, p, q)))


def emptiness_sum(start_level: int, lower: int, upper: int, p: float, q: float) -> float:
    """Sum of first_emptiness_prob over k in [lower, upper], via a max-shifted exponential sum."""
    lower = max(lower, start_level)
    if upper < lower:
        return 0.0
    logs = first_emptiness_log_kernel(start_level, upper, p, q)[lower:]
    return LogProb(min(0.0, float(logsumexp(logs)))).prob

