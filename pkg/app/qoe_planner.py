"""
QoE planning: delays, baseline starvation, offset selection, the QoE cost and
the DASH-vs-BSC ladder comparison.
"""

import logging
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Dict, List, Optional, Tuple

from app.ballot_analysis import starvation_count_pmf, starvation_prob
from app.config import Config
from app.des_simulator import replicate
from app.models import (
    ArrivalProcess,
    BitrateLadder,
    BudgetError,
    ConfigError,
    LadderLevel,
    LadderWeighting,
    PairConversion,
    PhiBound,
    QoEWeights,
    QualityMode,
    RegimeError,
    SessionParams,
)
from app.quality_markov import quality_times
from app.stream_model import emptiness_sum

logger = logging.getLogger(__name__)


def initial_buffering_delay(x: int, lam: float) -> float:
    if lam <= 0:
        raise RegimeError(f"lambda must be positive, got {lam}")
    return x / lam


def rebuffering_delay(x: int, phi: int, lam: float) -> float:
    """Mean pause after a starvation: x + phi - 1 arrivals."""
    if lam <= 0:
        raise RegimeError(f"lambda must be positive, got {lam}")
    return (x + phi - 1) / lam


def baseline_starvation_prob(N: int, x: int, p: float, q: float) -> float:
    """Starvation probability of plain prefetching (no BSC) with threshold x."""
    if x < 1 or N < x:
        raise ValueError(f"baseline needs 1 <= x <= N, got x={x}, N={N}")
    return emptiness_sum(x, x, N - 1, p, q)


def select_offset(
    N: int,
    x: int,
    rho: float,
    risk_threshold: float,
    mu: float = 1.0,
    phi_bound: PhiBound = PhiBound.DISPLAY,
) -> int:
    """
    Largest offset whose starvation probability stays within risk_threshold.

    Every phi in [1, N - x + 1] is evaluated; falls back to phi = 1 with a
    warning when none qualifies.
    """
    if not 0.0 < risk_threshold <= 1.0:
        raise ConfigError(f"risk_threshold must lie in (0, 1], got {risk_threshold}")
    best: Optional[int] = None
    for phi in range(1, N - x + 2):
        params = SessionParams(lam=rho * mu, mu=mu, file_size_N=N, startup_x=x, offset_phi=phi)
        if starvation_prob(params, phi_bound) <= risk_threshold:
            best = phi
    if best is None:
        logger.warning(
            f"No offset meets risk {risk_threshold} for N={N}, x={x}, rho={rho:.4g}; using phi=1"
        )
        return 1
    return best


@dataclass(frozen=True)
class QoECostBreakdown:
    initial_delay: float
    rebuffer_delay: float
    starvation_prob: float
    expected_starvations: float
    low_fraction: float
    quality_term: float
    quality_source: str
    cost: float

    def to_dict(self) -> Dict:
        return asdict(self)


def _quality_component(
    params: SessionParams,
    w_low: float,
    w_high: float,
    mode: QualityMode,
    seed: int,
) -> Tuple[float, float, str]:
    """Weighted time-in-level term, low-quality fraction and where it came from."""
    playback = params.file_size_N / params.mu
    if params.mu > params.lam:
        times = quality_times(params.startup_x, params.offset_phi, params.lam, params.mu, w_low, w_high)
        low_fraction, t_low, t_high, source = times.low_fraction, times.T_low, times.T_high, "analytic"
    elif params.offset_phi == 1:
        # every displayable frame is optimal
        low_fraction, t_low, t_high, source = 0.0, 0.0, playback, "exact"
    else:
        logger.info(
            f"rho={params.rho:.4g} >= 1: estimating quality by simulation over {Config.QUALITY_FALLBACK_RUNS} runs"
        )
        stats = replicate(params, ArrivalProcess.poisson(params.lam), Config.QUALITY_FALLBACK_RUNS, seed)
        low_fraction = 1.0 - stats.mean_quality_fraction.value
        t_low, t_high, source = low_fraction * playback, (1.0 - low_fraction) * playback, "simulation"
    if QualityMode(mode) == QualityMode.FRACTION:
        term = w_low * low_fraction + w_high * (1.0 - low_fraction)
    else:
        term = w_low * t_low + w_high * t_high
    return term, low_fraction, source


def qoe_cost(
    params: SessionParams,
    weights: QoEWeights,
    level_weights: Tuple[float, float],
    quality_mode: QualityMode = QualityMode.FRACTION,
    phi_bound: PhiBound = PhiBound.DISPLAY,
    j_max: int = Config.J_MAX,
    eps_trunc: float = Config.EPS_TRUNC,
    seed: int = Config.DEFAULT_SEED,
) -> QoECostBreakdown:
    """
    C = g1 * initial delay + g2 * expected starvations - g3 * quality term.

    Args:
        params: Session parameters
        weights: Coefficients gamma1..gamma3
        level_weights: (w_low, w_high) of the base-layer and optimal levels
        quality_mode: Fractions of time in each level, or absolute times
        phi_bound: Lower bound convention of the late regime
        j_max: Truncation depth of the starvation-count pmf
        eps_trunc: Truncation tolerance of the pmf
        seed: Seed of the simulation fallback used when rho >= 1

    Returns:
        QoECostBreakdown

    Raises:
        RegimeError, BudgetError: re-raised with the name of the failing term
    """
    w_low, w_high = level_weights
    try:
        delay = initial_buffering_delay(params.startup_x, params.lam)
    except RegimeError as e:
        logger.error(f"Initial delay term failed: {e}")
        raise RegimeError(f"initial delay term: {e}") from e
    try:
        pmf = starvation_count_pmf(params, j_max, eps_trunc, phi_bound)
    except BudgetError as e:
        logger.error(f"Starvation term failed: {e}")
        raise type(e)(f"starvation term: {e}") from e
    try:
        quality, low_fraction, source = _quality_component(params, w_low, w_high, quality_mode, seed)
    except (RegimeError, BudgetError) as e:
        logger.error(f"Quality term failed: {e}")
        raise type(e)(f"quality term: {e}") from e

    expected = pmf.expected_count()
    cost = weights.gamma1 * delay + weights.gamma2 * expected - weights.gamma3 * quality
    return QoECostBreakdown(
        initial_delay=delay,
        rebuffer_delay=rebuffering_delay(params.startup_x, params.offset_phi, params.lam),
        starvation_prob=pmf.at_least(1),
        expected_starvations=expected,
        low_fraction=low_fraction,
        quality_term=quality,
        quality_source=source,
        cost=cost,
    )


def pair_arrival_rate(
    b_low: float,
    b_high: float,
    throughput: float,
    frame_rate: float = Config.FRAME_RATE,
    conversion: PairConversion = PairConversion.AGGREGATE,
    svc_overhead: bool = False,
) -> float:
    """BSC frames per second the throughput sustains for a (b_low, b_high) Kbps pair."""
    if PairConversion(conversion) == PairConversion.LAYERED:
        kbits_per_frame = b_high / frame_rate
    else:
        kbits_per_frame = (b_low + b_high) / frame_rate
    if svc_overhead:
        kbits_per_frame *= Config.SVC_OVERHEAD
    return throughput / kbits_per_frame


def dash_selection(ladder: BitrateLadder, throughput: float) -> LadderLevel:
    """The level just under the throughput, as a rate-based DASH client picks it."""
    feasible = [level for level in ladder.levels if level.bitrate_kbps <= throughput]
    if not feasible:
        raise ConfigError(f"no ladder level fits a throughput of {throughput} Kbps")
    return feasible[-1]


@dataclass(frozen=True)
class RankedConfiguration:
    rank: int
    label: str
    kind: str
    b_low: float
    b_high: float
    phi: int
    lam: float
    rho: float
    breakdown: QoECostBreakdown

    @property
    def cost(self) -> float:
        return self.breakdown.cost

    def to_row(self) -> Dict:
        row = {
            "rank": self.rank,
            "label": self.label,
            "kind": self.kind,
            "b_low": self.b_low,
            "b_high": self.b_high,
            "phi": self.phi,
            "lambda": self.lam,
            "rho": self.rho,
        }
        row.update(self.breakdown.to_dict())
        return row


@dataclass(frozen=True)
class LadderPlan:
    """Session and cost settings shared by every candidate of a ladder comparison."""

    file_size_N: int
    startup_x: int
    offset_phi: int
    weights: QoEWeights
    frame_rate: float = Config.FRAME_RATE
    conversion: PairConversion = PairConversion.AGGREGATE
    svc_overhead: bool = False
    weighting: LadderWeighting = LadderWeighting.KBPS
    quality_mode: QualityMode = QualityMode.FRACTION
    phi_bound: PhiBound = PhiBound.DISPLAY
    j_max: int = Config.J_MAX
    eps_trunc: float = Config.EPS_TRUNC
    seed: int = Config.DEFAULT_SEED

    def cost(self, lam: float, phi: int, level_weights: Tuple[float, float]) -> QoECostBreakdown:
        params = SessionParams(
            lam=lam,
            mu=self.frame_rate,
            file_size_N=self.file_size_N,
            startup_x=self.startup_x,
            offset_phi=phi,
        )
        return qoe_cost(
            params, self.weights, level_weights, self.quality_mode,
            self.phi_bound, self.j_max, self.eps_trunc, self.seed,
        )


def dash_arrival_rate(level: LadderLevel, throughput: float, frame_rate: float) -> float:
    return throughput * frame_rate / level.bitrate_kbps


def dash_cost(level: LadderLevel, ladder: BitrateLadder, lam: float, plan: LadderPlan) -> QoECostBreakdown:
    w = ladder.weight_of(level, plan.weighting)
    return plan.cost(lam, 1, (w, w))


def bsc_pair_cost(
    low: LadderLevel, high: LadderLevel, ladder: BitrateLadder, lam: float, plan: LadderPlan
) -> QoECostBreakdown:
    weights = (ladder.weight_of(low, plan.weighting), ladder.weight_of(high, plan.weighting))
    return plan.cost(lam, plan.offset_phi, weights)


def compare_ladder(ladder: BitrateLadder, throughput: float, plan: LadderPlan) -> List[RankedConfiguration]:
    """
    Rank single-rate DASH choices and BSC pairs by QoE cost, lowest first.

    DASH candidates are levels at or under the throughput; BSC candidates are
    pairs b_low < b_high whose base level fits the throughput.

    Raises:
        ConfigError: nothing is feasible at this throughput
    """
    if throughput <= 0:
        raise ConfigError(f"throughput must be positive, got {throughput} Kbps")
    candidates = []
    for level in ladder.levels:
        if level.bitrate_kbps > throughput:
            continue
        lam = dash_arrival_rate(level, throughput, plan.frame_rate)
        candidates.append((f"DASH {level.label}", "dash", level, level, 1, lam,
                           dash_cost(level, ladder, lam, plan)))
    for low, high in combinations(ladder.levels, 2):
        if low.bitrate_kbps > throughput:
            continue
        lam = pair_arrival_rate(
            low.bitrate_kbps, high.bitrate_kbps, throughput, plan.frame_rate, plan.conversion, plan.svc_overhead
        )
        candidates.append((f"BSC {high.label}+{low.label}", "bsc", low, high, plan.offset_phi, lam,
                           bsc_pair_cost(low, high, ladder, lam, plan)))
    if not candidates:
        raise ConfigError(f"no DASH level or BSC pair is feasible at throughput {throughput} Kbps")

    candidates.sort(key=lambda c: (c[6].cost, c[0]))
    ranked = [
        RankedConfiguration(
            rank=i + 1,
            label=label,
            kind=kind,
            b_low=low.bitrate_kbps,
            b_high=high.bitrate_kbps,
            phi=phi,
            lam=lam,
            rho=lam / plan.frame_rate,
            breakdown=breakdown,
        )
        for i, (label, kind, low, high, phi, lam, breakdown) in enumerate(candidates)
    ]
    logger.info(f"Ranked {len(ranked)} configurations at {throughput} Kbps; best is {ranked[0].label}")
    return ranked
