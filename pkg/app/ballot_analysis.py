"""
Closed-form starvation analysis for BSC playback.

Starvation probability for both offset regimes, the event vectors describing
successive buffer-emptiness positions, and the distribution of the number of
starvations with its probability generating function.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.config import Config
from app.models import PhiBound, RegimeError, SessionParams, TruncationError
from app.stream_model import emptiness_sum, event_probs, first_emptiness_kernel

logger = logging.getLogger(__name__)


def late_lower_bound(params: SessionParams, phi_bound: PhiBound = PhiBound.DISPLAY) -> int:
    """First departure index at which a late-regime emptiness is counted."""
    if PhiBound(phi_bound) == PhiBound.PROOF:
        return params.x_phi
    return 2 * params.offset_phi - 2


def early_regime_depth(params: SessionParams) -> int:
    """Number of starvations that can occur before frame phi - 1 is reached."""
    return max(0, (params.offset_phi - 2) // params.startup_x)


def starvation_prob_small_offset(params: SessionParams) -> float:
    """
    Starvation probability when phi <= x.

    The BSC prefetch behaves like a plain prefetch of x + phi - 1 frames.
    """
    if params.offset_phi > params.startup_x:
        raise RegimeError(
            f"small-offset formula needs offset_phi <= startup_x, got phi={params.offset_phi}, x={params.startup_x}"
        )
    p, q = event_probs(params)
    return emptiness_sum(params.x_phi, params.x_phi, params.file_size_N - 1, p, q)


def starvation_prob_large_offset(params: SessionParams, phi_bound: PhiBound = PhiBound.DISPLAY) -> float:
    """
    Starvation probability when phi > x.

    Early emptiness at threshold x before frame phi - 1, or, failing that, late
    emptiness at threshold x + phi - 1 from the configured lower bound on.
    """
    if params.offset_phi <= params.startup_x:
        raise RegimeError(
            f"large-offset formula needs offset_phi > startup_x, got phi={params.offset_phi}, x={params.startup_x}"
        )
    p, q = event_probs(params)
    n, x, phi = params.file_size_N, params.startup_x, params.offset_phi
    p_s1 = emptiness_sum(x, x, min(phi - 2, n - 1), p, q)
    p_s2 = emptiness_sum(params.x_phi, late_lower_bound(params, phi_bound), n - 1, p, q)
    return min(1.0, p_s1 + (1.0 - p_s1) * p_s2)


def starvation_prob(params: SessionParams, phi_bound: PhiBound = PhiBound.DISPLAY) -> float:
    if params.offset_phi <= params.startup_x:
        return starvation_prob_small_offset(params)
    return starvation_prob_large_offset(params, phi_bound)


@dataclass(frozen=True)
class TransitionKernel:
    """
    Banded transition between the positions of consecutive emptiness events.

    Late rows move by the x + phi - 1 kernel; early rows (only while another
    early starvation is possible) move by the x kernel up to phi - 2 and hand
    their remaining mass to the late kernel past the zero window.
    """

    size: int
    late_from: int
    early_rows: Optional[range]
    late_columns_from: int
    early_columns_to: int
    kernel_x: np.ndarray
    kernel_x_phi: np.ndarray
    early_mass: np.ndarray = field(repr=False)

    def propagate(self, v: np.ndarray) -> np.ndarray:
        """Row vector times this kernel, truncated to departures below the file size."""
        out = np.zeros(self.size)
        late = np.where(np.arange(self.size) >= self.late_from, v, 0.0)
        if late.any():
            out += np.convolve(late, self.kernel_x_phi)[: self.size]
        if self.early_rows is not None and len(self.early_rows):
            early = np.zeros(self.size)
            rows = self.early_rows
            early[rows.start:rows.stop] = v[rows.start:rows.stop]
            if early.any():
                stay = np.convolve(early, self.kernel_x)[: self.size]
                stay[self.early_columns_to + 1:] = 0.0
                leave = np.convolve(early * (1.0 - self.early_mass), self.kernel_x_phi)[: self.size]
                leave[: self.late_columns_from] = 0.0
                out += stay + leave
        return out

    def to_dense(self) -> np.ndarray:
        rows = [self.propagate(unit) for unit in np.eye(self.size)]
        return np.vstack(rows) if rows else np.zeros((0, 0))


@dataclass
class EventVectors:
    """First-emptiness vector F, no-further-starvation vectors L_j and kernels M_l."""

    F: np.ndarray
    L: List[np.ndarray]
    M: List[TransitionKernel]
    p_s1: float
    e: int
    late_start: int

    def L_j(self, j: int) -> np.ndarray:
        return self.L[j - 1]

    def M_l(self, l: int) -> TransitionKernel:
        return self.M[l - 1]


class _EventModel:
    """Builds the event vectors of one session lazily, one starvation index at a time."""

    def __init__(self, params: SessionParams, phi_bound: PhiBound):
        self.params = params
        self.n = params.file_size_N
        self.x = params.startup_x
        self.phi = params.offset_phi
        self.x_phi = params.x_phi
        self.e = early_regime_depth(params)
        self.late_start = late_lower_bound(params, phi_bound)
        p, q = event_probs(params)
        self.kernel_x = first_emptiness_kernel(self.x, self.n, p, q)
        self.kernel_x_phi = first_emptiness_kernel(self.x_phi, self.n, p, q)
        self.cum_x = np.concatenate(([0.0], np.cumsum(self.kernel_x)))
        self.cum_x_phi = np.concatenate(([0.0], np.cumsum(self.kernel_x_phi)))
        early_top = min(self.phi - 2, self.n - 1)
        self.p_s1 = self._window(self.cum_x, self.x, early_top)

    @staticmethod
    def _window(cum: np.ndarray, lower: int, upper: int) -> float:
        """Kernel mass over [lower, upper]."""
        if upper < lower:
            return 0.0
        return float(min(1.0, max(0.0, cum[upper + 1] - cum[lower])))

    def _late_starvation(self, remaining: int) -> float:
        """Starvation probability of a late restart with `remaining` departures left."""
        return self._window(self.cum_x_phi, self.x_phi, remaining - 1)

    def _fresh_starvation(self, remaining: int) -> float:
        """Two-phase starvation probability of a fresh start, early sum capped at remaining - 1."""
        p_s1 = self._window(self.cum_x, self.x, min(self.phi - 2, remaining - 1))
        p_s2 = self._window(self.cum_x_phi, max(self.late_start, self.x_phi), remaining - 1)
        return min(1.0, p_s1 + (1.0 - p_s1) * p_s2)

    def first_emptiness(self) -> np.ndarray:
        F = np.zeros(self.n)
        if self.phi - 2 >= self.x:
            top = min(self.phi - 2, self.n - 1)
            F[self.x:top + 1] = self.kernel_x[self.x:top + 1]
        if self.late_start <= self.n - 1:
            start = max(self.late_start, 0)
            F[start:] = (1.0 - self.p_s1) * self.kernel_x_phi[start:self.n]
        return F

    def no_further(self, j: int) -> np.ndarray:
        L = np.zeros(self.n)
        window = range(self.phi - 1, self.late_start)
        tail_from = self.n - self.x_phi
        if j <= self.e or j == 1:
            lower = j * self.x
            for k in range(lower, self.n):
                if k in window:
                    continue
                if k >= tail_from:
                    L[k] = 1.0
                elif k < self.phi - self.x:
                    L[k] = 1.0 - self._fresh_starvation(self.n - k)
                elif k < self.phi - 1 or k >= self.late_start:
                    L[k] = 1.0 - self._late_starvation(self.n - k)
            return L
        lower = self.late_start + (j - 1 - self.e) * self.x_phi
        for k in range(max(lower, 0), self.n):
            L[k] = 1.0 if k >= tail_from else 1.0 - self._late_starvation(self.n - k)
        return L

    def transition(self, l: int) -> TransitionKernel:
        late_from = self.late_start + max(0, l - 1 - self.e) * self.x_phi
        early_rows = None
        early_mass = np.zeros(self.n)
        if l <= self.e:
            top = min(self.phi - 1, self.n)
            early_rows = range(l * self.x, top)
            for k in early_rows:
                early_mass[k] = self._window(self.cum_x, self.x, self.phi - 2 - k)
        return TransitionKernel(
            size=self.n,
            late_from=max(late_from, 0),
            early_rows=early_rows,
            late_columns_from=max(self.late_start, 0),
            early_columns_to=self.phi - 2,
            kernel_x=self.kernel_x,
            kernel_x_phi=self.kernel_x_phi,
            early_mass=early_mass,
        )


def build_event_vectors(
    params: SessionParams, J: int, phi_bound: PhiBound = PhiBound.DISPLAY
) -> EventVectors:
    """
    Event vectors F, L_1..L_J and M_1..M_{J-1} for one session.

    Args:
        params: Session parameters
        J: Largest starvation index to build
        phi_bound: Lower bound convention for late-regime emptiness

    Returns:
        EventVectors with all entries in [0, 1]
    """
    if J < 1:
        raise ValueError(f"J must be at least 1, got {J}")
    model = _EventModel(params, PhiBound(phi_bound))
    return EventVectors(
        F=model.first_emptiness(),
        L=[model.no_further(j) for j in range(1, J + 1)],
        M=[model.transition(l) for l in range(1, J)],
        p_s1=model.p_s1,
        e=model.e,
        late_start=model.late_start,
    )


@dataclass
class StarvationPmf:
    """Distribution of the number of starvations over j = 0..truncation_J."""

    probs: np.ndarray
    truncation_J: int
    params: SessionParams
    residual: float = 0.0
    eps_trunc: float = Config.EPS_TRUNC

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    def __len__(self) -> int:
        return len(self.probs)

    def total(self) -> float:
        return float(self.probs.sum())

    def expected_count(self) -> float:
        j = np.arange(len(self.probs))
        return float(np.dot(j, self.probs))

    def variance(self) -> float:
        j = np.arange(len(self.probs))
        first = float(np.dot(j, self.probs))
        second = float(np.dot(j * (j - 1), self.probs))
        return max(0.0, second + first - first ** 2)

    def at_least(self, j: int) -> float:
        """P(number of starvations >= j), residual tail included."""
        if j <= 0:
            return 1.0
        if j > self.truncation_J:
            return self.residual
        return float(min(1.0, self.probs[j:].sum() + self.residual))


def starvation_count_pmf(
    params: SessionParams,
    J_max: int = Config.J_MAX,
    eps_trunc: float = Config.EPS_TRUNC,
    phi_bound: PhiBound = PhiBound.DISPLAY,
) -> StarvationPmf:
    """
    Starvation-count distribution from F (M_1 ... M_{j-1}) L_j^T.

    Stops as soon as the mass still able to starve again is at most eps_trunc;
    probs[0] is the clamped complement of the listed counts and the residual tail,
    so sum(probs) + residual == 1.

    Raises:
        TruncationError: residual mass above eps_trunc after J_max starvations
    """
    model = _EventModel(params, PhiBound(phi_bound))
    v = model.first_emptiness()
    probs = [0.0]
    residual = 0.0
    j = 0
    while True:
        j += 1
        probs.append(float(min(1.0, max(0.0, v @ model.no_further(j)))))
        v = model.transition(j).propagate(v)
        residual = float(v.sum())
        if residual <= eps_trunc:
            break
        if j >= J_max:
            raise TruncationError(
                f"starvation-count tail {residual:.3e} exceeds eps_trunc={eps_trunc} at J_max={J_max} "
                f"(N={params.file_size_N}, rho={params.rho:.6g})"
            )
    probs[0] = min(1.0, max(0.0, 1.0 - sum(probs[1:]) - residual))
    logger.info(f"Starvation pmf truncated at J={j} with residual {residual:.3e}")
    return StarvationPmf(probs=probs, truncation_J=j, params=params, residual=residual, eps_trunc=eps_trunc)


def pgf_evaluate(pmf: StarvationPmf, z: float) -> float:
    """G(z) = sum_j P(j) z^j."""
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    return float(np.polynomial.polynomial.polyval(z, pmf.probs))
