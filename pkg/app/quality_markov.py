"""
Quasi-stationary analysis of the quality-switching birth-death chain.

The chain state is n = A - D. States below zero play the base layer only,
n = -phi is starvation (absorbing) and the chain restarts from state x.
"""

import math
from dataclasses import dataclass

import numpy as np

from app.config import Config
from app.models import RegimeError


def _require_stable(lam: float, mu: float) -> None:
    if lam < 0 or mu <= 0:
        raise RegimeError(f"rates must satisfy lambda >= 0 and mu > 0, got lambda={lam}, mu={mu}")
    if mu <= lam:
        raise RegimeError(f"quality chain needs mu > lambda, got lambda={lam}, mu={mu}")


def _require_shape(x: int, phi: int) -> None:
    if x < 1 or phi < 1:
        raise RegimeError(f"startup_x and offset_phi must be at least 1, got x={x}, phi={phi}")


@dataclass(frozen=True)
class QuasiStationaryDist:
    """State probabilities from -phi+1 up to tail_truncated_at, plus the analytic tail beyond it."""

    states: np.ndarray
    q: np.ndarray
    rho: float
    x: int
    phi: int
    tail_truncated_at: int
    tail_mass: float

    @property
    def norm(self) -> float:
        return float(self.phi + self.x)

    @property
    def plateau(self) -> float:
        """Common factor of the geometric tail, q_x."""
        return (1.0 - self.rho ** (self.x + self.phi)) / self.norm

    def prob(self, j: int) -> float:
        """q_j from the closed form, for any state j."""
        if j < -self.phi + 1:
            return 0.0
        if j <= self.x:
            return (1.0 - self.rho ** (j + self.phi)) / self.norm
        return self.plateau * self.rho ** (j - self.x)

    def total(self) -> float:
        return float(self.q.sum()) + self.tail_mass

    def low_mass(self) -> float:
        """Probability mass of the base-layer states -phi+1 .. -1."""
        m = self.phi - 1
        if m == 0:
            return 0.0
        geometric = self.rho * (1.0 - self.rho ** m) / (1.0 - self.rho) if self.rho > 0 else 0.0
        return (m - geometric) / self.norm

    def high_mass(self) -> float:
        return 1.0 - self.low_mass()


def quasi_stationary(x: int, phi: int, rho: float, tail_eps: float = Config.QUASI_TAIL_EPS) -> QuasiStationaryDist:
    """
    Closed-form quasi-stationary distribution of the quality chain.

    Args:
        x: Prefetch threshold, also the restart state
        phi: BSC offset; states down to -phi+1 are live
        rho: Traffic load, must be below 1
        tail_eps: Enumerated states stop once the geometric tail drops below this mass

    Returns:
        QuasiStationaryDist whose enumerated part plus tail_mass sums to one
    """
    _require_shape(x, phi)
    if not 0.0 <= rho < 1.0:
        raise RegimeError(f"quasi-stationary regime needs 0 <= rho < 1, got rho={rho}")
    plateau = (1.0 - rho ** (x + phi)) / (phi + x)
    # smallest j_max >= x with plateau * rho^(j_max - x + 1) / (1 - rho) below tail_eps
    extra = 0
    if rho > 0.0 and plateau > 0.0:
        needed = math.log(tail_eps * (1.0 - rho) / plateau) / math.log(rho)
        extra = max(0, math.ceil(needed - 1.0))
    j_max = x + extra
    states = np.arange(-phi + 1, j_max + 1)
    low = states[states <= x]
    q = np.empty(len(states))
    q[: len(low)] = (1.0 - np.power(rho, low + phi)) / (phi + x)
    q[len(low):] = plateau * np.power(rho, states[len(low):] - x)
    tail_mass = plateau * rho ** (extra + 1) / (1.0 - rho) if rho > 0.0 else 0.0
    return QuasiStationaryDist(
        states=states,
        q=q,
        rho=rho,
        x=x,
        phi=phi,
        tail_truncated_at=j_max,
        tail_mass=tail_mass,
    )


def balance_residuals(dist: QuasiStationaryDist, lam: float, mu: float) -> np.ndarray:
    """
    Residuals of the balance equations at every enumerated state below the truncation point.

    The first entry is the -phi+1 row (q_{-phi} is absorbing and counts as zero), the restart row at x
    carries the re-entry flow mu * q_{-phi+1}.
    """
    prob = dist.prob
    low = -dist.phi + 1
    residuals = []
    for j in range(low, dist.tail_truncated_at):
        inflow = lam * prob(j - 1) + mu * prob(j + 1)
        if j == dist.x:
            inflow += mu * prob(low)
        residuals.append(inflow - (lam + mu) * prob(j))
    return np.array(residuals)


def absorption_time(x: int, phi: int, lam: float, mu: float) -> float:
    """Mean time from state x to starvation at -phi: (x + phi) / (mu - lambda)."""
    _require_shape(x, phi)
    _require_stable(lam, mu)
    return (x + phi) / (mu - lam)


@dataclass(frozen=True)
class QualityTimes:
    T_low: float
    T_high: float
    b_avg: float
    E_tau: float

    @property
    def low_fraction(self) -> float:
        return self.T_low / self.E_tau if self.E_tau > 0 else 0.0


def quality_times(x: int, phi: int, lam: float, mu: float, b_low: float, b_high: float) -> QualityTimes:
    """Expected time at base-layer and optimal quality before starvation, and the average bitrate."""
    _require_stable(lam, mu)
    dist = quasi_stationary(x, phi, lam / mu)
    e_tau = absorption_time(x, phi, lam, mu)
    t_low = e_tau * dist.low_mass()
    t_high = e_tau - t_low
    b_avg = (t_low * b_low + t_high * b_high) / (t_low + t_high)
    return QualityTimes(T_low=t_low, T_high=t_high, b_avg=b_avg, E_tau=e_tau)


@dataclass(frozen=True)
class BusyPeriodStats:
    mean: float
    variance: float


def busy_period_stats(lam: float, mu: float) -> BusyPeriodStats:
    """Mean and variance of an optimal-quality spell, an M/M/1 busy period."""
    _require_stable(lam, mu)
    rho = lam / mu
    return BusyPeriodStats(
        mean=1.0 / (mu - lam),
        variance=(1.0 + rho) / (mu ** 2 * (1.0 - rho) ** 3),
    )
