"""
Exhaustive enumeration of the embedded arrival/departure chain for tiny sessions.

Probabilities are exact rationals. Paths are merged by state as they are
generated, so the cost is polynomial in N rather than exponential.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Tuple

from app.config import Config
from app.models import BudgetError, SessionParams

logger = logging.getLogger(__name__)

# (arrived, displayed, playing, starvations, first position, second position)
_State = Tuple[int, int, bool, int, Optional[int], Optional[int]]


@dataclass
class PathOracleResult:
    """Exact starvation-count pmf and emptiness-position marginals of one session."""

    params: SessionParams
    p: Fraction
    q: Fraction
    pmf: Dict[int, Fraction] = field(default_factory=dict)
    first_at: Dict[int, Fraction] = field(default_factory=dict)
    joint: Dict[Tuple[int, int], Fraction] = field(default_factory=dict)
    exactly_one_at: Dict[int, Fraction] = field(default_factory=dict)
    exactly_two_second_at: Dict[int, Fraction] = field(default_factory=dict)

    @property
    def starvation_prob(self) -> Fraction:
        return 1 - self.pmf.get(0, Fraction(0))

    def pmf_list(self) -> list:
        top = max(self.pmf) if self.pmf else 0
        return [self.pmf.get(j, Fraction(0)) for j in range(top + 1)]

    def second_at(self) -> Dict[int, Fraction]:
        marginal: Dict[int, Fraction] = defaultdict(Fraction)
        for (_, k2), prob in self.joint.items():
            marginal[k2] += prob
        return dict(marginal)

    def to_dict(self, rational: bool = False) -> Dict:
        def fmt(value: Fraction):
            return str(value) if rational else float(value)

        return {
            "starvation_prob": fmt(self.starvation_prob),
            "pmf": [fmt(v) for v in self.pmf_list()],
            "first_at": {str(k): fmt(v) for k, v in sorted(self.first_at.items())},
            "joint": {f"{k1},{k2}": fmt(v) for (k1, k2), v in sorted(self.joint.items())},
            "exactly_one_at": {str(k): fmt(v) for k, v in sorted(self.exactly_one_at.items())},
            "exactly_two_second_at": {str(k): fmt(v) for k, v in sorted(self.exactly_two_second_at.items())},
        }


def exact_event_probs(params: SessionParams) -> Tuple[Fraction, Fraction]:
    rho = Fraction(params.lam) / Fraction(params.mu)
    return rho / (1 + rho), 1 / (1 + rho)


def enumerate_paths(
    params: SessionParams,
    p: Optional[Fraction] = None,
    q: Optional[Fraction] = None,
    max_n: int = Config.ORACLE_MAX_N,
) -> PathOracleResult:
    """
    Enumerate every arrival/departure ordering of a session under the BSC playback rules.

    Args:
        params: Session with file_size_N <= max_n
        p: Arrival probability while playing; defaults to the exact value from rho
        q: Departure probability while playing
        max_n: Enumeration budget on N

    Returns:
        PathOracleResult with rational probabilities

    Raises:
        BudgetError: N beyond the enumeration budget
    """
    n, x, phi = params.file_size_N, params.startup_x, params.offset_phi
    if n > max_n:
        raise BudgetError(f"path enumeration is limited to N <= {max_n}, got file_size_N={n}")
    if p is None or q is None:
        p, q = exact_event_probs(params)
    if p + q != 1:
        raise ValueError(f"p + q must equal 1, got {p} + {q}")

    def base_frontier(arrived: int) -> int:
        if arrived <= phi - 2:
            return arrived
        return min(arrived + phi - 1, n)

    result = PathOracleResult(params=params, p=p, q=q)
    frontier: Dict[_State, Fraction] = {(0, 0, False, 0, None, None): Fraction(1)}
    while frontier:
        following: Dict[_State, Fraction] = defaultdict(Fraction)
        for (a, d, playing, count, k1, k2), prob in frontier.items():
            if not playing:
                a_next = a + 1
                resume = a_next - d >= x or a_next == n
                following[(a_next, d, resume, count, k1, k2)] += prob
                continue
            depart = prob
            if a < n:
                following[(a + 1, d, True, count, k1, k2)] += prob * p
                depart = prob * q
            d_next = d + 1
            if d_next == n:
                _collect(result, count, k1, k2, depart)
            elif base_frontier(a) < d_next + 1:
                k1_next = d_next if count == 0 else k1
                k2_next = d_next if count == 1 else k2
                following[(a, d_next, False, count + 1, k1_next, k2_next)] += depart
            else:
                following[(a, d_next, True, count, k1, k2)] += depart
        frontier = following
    total = sum(result.pmf.values())
    if total != 1:
        raise RuntimeError(f"oracle probabilities sum to {total}, expected 1")
    logger.info(f"Enumerated N={n}, x={x}, phi={phi}: P(starvation)={float(result.starvation_prob):.6g}")
    return result


def _collect(result: PathOracleResult, count: int, k1: Optional[int], k2: Optional[int], prob: Fraction):
    result.pmf[count] = result.pmf.get(count, Fraction(0)) + prob
    if k1 is not None:
        result.first_at[k1] = result.first_at.get(k1, Fraction(0)) + prob
        if count == 1:
            result.exactly_one_at[k1] = result.exactly_one_at.get(k1, Fraction(0)) + prob
    if k2 is not None:
        result.joint[(k1, k2)] = result.joint.get((k1, k2), Fraction(0)) + prob
        if count == 2:
            result.exactly_two_second_at[k2] = result.exactly_two_second_at.get(k2, Fraction(0)) + prob
