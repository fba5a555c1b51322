"""
Discrete-event simulation of BSC playback sessions.

Frame n carries the enhancement layer of frame n and the base layer of frame
n + phi - 1. Playback starts once x optimal frames are buffered, starves when
the next frame has no base layer, and resumes after x optimal frames are
buffered again.
"""

import csv
import heapq
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from app.config import Config
from app.models import ArrivalKind, ArrivalProcess, BudgetError, RegimeError, SessionParams

logger = logging.getLogger(__name__)


class EventType(str, Enum):
    ARRIVAL = "arrival"
    DISPLAY = "display"
    STARVATION = "starvation"
    REBUFFER_START = "rebuffer_start"
    REBUFFER_END = "rebuffer_end"
    QUALITY_SWITCH = "quality_switch"


class QualityLevel(str, Enum):
    LOW = "low"
    OPTIMAL = "optimal"


# same-time ties: a frame that arrives exactly at a display boundary counts for it
_PRIORITY = {EventType.ARRIVAL: 0, EventType.DISPLAY: 1}


@dataclass(order=True)
class Event:
    time: float
    priority: int
    event_type: EventType = field(compare=False)


@dataclass
class TraceRecord:
    time: float
    event_type: EventType
    buffer_level: int
    state_n: int


@dataclass
class QualityInterval:
    start: float
    end: float
    level: QualityLevel

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class SessionTrace:
    """Outcome of one simulated playback session."""

    starvation_count: int = 0
    starvation_epochs: List[Tuple[int, float]] = field(default_factory=list)
    initial_delay: float = 0.0
    rebuffer_delays: List[float] = field(default_factory=list)
    quality_intervals: List[QualityInterval] = field(default_factory=list)
    completed: bool = False
    records: List[TraceRecord] = field(default_factory=list)

    def time_at(self, level: QualityLevel) -> float:
        return sum(interval.duration for interval in self.quality_intervals if interval.level == level)

    @property
    def playback_time(self) -> float:
        return sum(interval.duration for interval in self.quality_intervals)

    @property
    def optimal_fraction(self) -> float:
        total = self.playback_time
        return self.time_at(QualityLevel.OPTIMAL) / total if total > 0 else 1.0

    @property
    def total_rebuffer_time(self) -> float:
        return float(sum(self.rebuffer_delays))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_arrival_times(process: ArrivalProcess, count: int, rng: np.random.Generator) -> np.ndarray:
    """Arrival instants of the first `count` frames, nondecreasing."""
    if count <= 0:
        return np.zeros(0)
    if process.kind == ArrivalKind.POISSON:
        return np.cumsum(rng.exponential(1.0 / process.rate, count))
    if process.kind == ArrivalKind.LOGISTIC:
        gaps = rng.logistic(process.location, process.scale, count)
        bad = gaps <= 0
        while bad.any():
            gaps[bad] = rng.logistic(process.location, process.scale, int(bad.sum()))
            bad = gaps <= 0
        return np.cumsum(gaps)
    # ON/OFF: exponential arrivals on the ON clock, shifted by the OFF time elapsed so far
    on_clock = np.cumsum(rng.exponential(1.0 / process.on_rate, count))
    on_periods = np.zeros(0)
    off_periods = np.zeros(0)
    batch = max(8, count // 4)
    while on_periods.sum() <= on_clock[-1]:
        on_periods = np.concatenate((on_periods, rng.exponential(process.on_duration_mean, batch)))
        off_periods = np.concatenate((off_periods, rng.exponential(process.off_duration_mean, batch)))
    period = np.searchsorted(np.cumsum(on_periods), on_clock, side="right")
    off_before = np.concatenate(([0.0], np.cumsum(off_periods)))
    return on_clock + off_before[period]


class PlaybackSession:
    """Event-driven state machine of one session; A frames arrived, D frames displayed."""

    def __init__(
        self,
        params: SessionParams,
        arrival_times: np.ndarray,
        service_times: np.ndarray,
        record_trace: bool = True,
    ):
        self.params = params
        self.arrival_times = arrival_times
        self.service_times = service_times
        self.record_trace = record_trace
        self.logger = logging.getLogger(__name__)

        self.now = 0.0
        self.arrived = 0
        self.displayed = 0
        self.playing = False
        self.started = False
        self.pause_started = 0.0
        self.segment_start = 0.0
        self.segment_level: Optional[QualityLevel] = None
        self.event_queue: List[Event] = []
        self.trace = SessionTrace()

    def base_frontier(self) -> int:
        """Highest frame index whose base layer has arrived."""
        phi = self.params.offset_phi
        if self.arrived <= phi - 2:
            return self.arrived
        return min(self.arrived + phi - 1, self.params.file_size_N)

    def _schedule(self, time: float, event_type: EventType):
        heapq.heappush(self.event_queue, Event(time, _PRIORITY[event_type], event_type))

    def _record(self, event_type: EventType):
        if self.record_trace:
            self.trace.records.append(TraceRecord(
                time=self.now,
                event_type=event_type,
                buffer_level=self.base_frontier() - self.displayed,
                state_n=self.arrived - self.displayed,
            ))

    def _close_segment(self):
        if self.segment_level is None:
            return
        intervals = self.trace.quality_intervals
        if intervals and intervals[-1].level == self.segment_level and intervals[-1].end == self.segment_start:
            intervals[-1].end = self.now
        else:
            intervals.append(QualityInterval(self.segment_start, self.now, self.segment_level))
        self.segment_level = None

    def _open_segment(self, level: QualityLevel):
        self.segment_start = self.now
        self.segment_level = level

    def _begin_frame(self):
        frame = self.displayed + 1
        level = QualityLevel.OPTIMAL if self.arrived >= frame else QualityLevel.LOW
        self._open_segment(level)
        self._schedule(self.now + self.service_times[self.displayed], EventType.DISPLAY)

    def _resume(self):
        if self.started:
            self.trace.rebuffer_delays.append(self.now - self.pause_started)
            self._record(EventType.REBUFFER_END)
        else:
            self.trace.initial_delay = self.now
            self.started = True
        self.playing = True
        self._begin_frame()

    def _handle_arrival(self):
        self.arrived += 1
        self._record(EventType.ARRIVAL)
        if self.arrived < self.params.file_size_N:
            self._schedule(self.arrival_times[self.arrived], EventType.ARRIVAL)
        if self.playing:
            if self.segment_level == QualityLevel.LOW and self.arrived >= self.displayed + 1:
                self._close_segment()
                self._open_segment(QualityLevel.OPTIMAL)
                self._record(EventType.QUALITY_SWITCH)
        elif (self.arrived - self.displayed >= self.params.startup_x
              or self.arrived == self.params.file_size_N):
            self._resume()

    def _handle_display(self):
        self._close_segment()
        self.displayed += 1
        self._record(EventType.DISPLAY)
        if self.displayed == self.params.file_size_N:
            self.playing = False
            self.trace.completed = True
            return
        if self.base_frontier() < self.displayed + 1:
            self.playing = False
            self.pause_started = self.now
            self.trace.starvation_count += 1
            self.trace.starvation_epochs.append((self.displayed, self.now))
            self._record(EventType.STARVATION)
            self._record(EventType.REBUFFER_START)
            return
        self._begin_frame()

    def run(self) -> SessionTrace:
        if len(self.arrival_times):
            self._schedule(self.arrival_times[0], EventType.ARRIVAL)
        # the last frame can be shown before every packet has arrived
        while self.event_queue and not self.trace.completed:
            event = heapq.heappop(self.event_queue)
            self.now = event.time
            if event.event_type == EventType.ARRIVAL:
                self._handle_arrival()
            else:
                self._handle_display()
        return self.trace


def simulate_session(
    params: SessionParams,
    arrivals: ArrivalProcess,
    seed: int,
    record_trace: bool = True,
) -> SessionTrace:
    """
    Simulate one BSC session.

    Args:
        params: Session parameters; mu sets the exponential display times
        arrivals: Frame-arrival process
        seed: Seed of the Philox generator; arrivals are drawn before display times
        record_trace: Keep the per-event log

    Returns:
        SessionTrace of the session
    """
    rng = make_rng(seed)
    arrival_times = sample_arrival_times(arrivals, params.file_size_N, rng)
    service_times = rng.exponential(1.0 / params.mu, params.file_size_N)
    return PlaybackSession(params, arrival_times, service_times, record_trace).run()


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "ci_low": None if self.ci is None else self.ci[0],
            "ci_high": None if self.ci is None else self.ci[1],
        }


def proportion_estimate(successes: int, runs: int, confidence: float = 0.95) -> Estimate:
    p_hat = successes / runs
    if runs < 2:
        return Estimate(p_hat)
    se = float(np.sqrt(p_hat * (1.0 - p_hat) / runs))
    h = se * stats.norm.ppf((1 + confidence) / 2.0)
    return Estimate(p_hat, se, (p_hat - h, p_hat + h))


def mean_estimate(samples: np.ndarray, confidence: float = 0.95) -> Estimate:
    a = np.asarray(samples, dtype=float)
    m = float(np.mean(a)) if len(a) else 0.0
    if len(a) < 2:
        return Estimate(m)
    se = float(stats.sem(a))
    h = se * stats.t.ppf((1 + confidence) / 2.0, len(a) - 1)
    return Estimate(m, se, (m - h, m + h))


@dataclass
class RunSummary:
    starvations: int
    first_emptiness: Optional[int]
    optimal_fraction: float
    rebuffer_time: float
    initial_delay: float


@dataclass
class EmpiricalStats:
    """Replication estimates with standard errors; errors are None for a single run."""

    runs: int
    starvation_prob_hat: Estimate
    pmf_hat: List[Estimate]
    mean_quality_fraction: Estimate
    mean_rebuffer_time: Estimate
    mean_initial_delay: Estimate
    mean_starvations: Estimate
    counts: np.ndarray = field(repr=False)
    first_emptiness: List[Optional[int]] = field(repr=False, default_factory=list)

    def at_least(self, j: int) -> Estimate:
        return proportion_estimate(int(np.sum(self.counts >= j)), self.runs)

    def to_dict(self) -> Dict:
        return {
            "runs": self.runs,
            "starvation_prob": self.starvation_prob_hat.to_dict(),
            "pmf": [estimate.to_dict() for estimate in self.pmf_hat],
            "quality_fraction": self.mean_quality_fraction.to_dict(),
            "rebuffer_time": self.mean_rebuffer_time.to_dict(),
            "initial_delay": self.mean_initial_delay.to_dict(),
            "starvations": self.mean_starvations.to_dict(),
        }


def _summarize(job: Tuple[SessionParams, ArrivalProcess, int]) -> RunSummary:
    params, arrivals, seed = job
    trace = simulate_session(params, arrivals, seed, record_trace=False)
    return RunSummary(
        starvations=trace.starvation_count,
        first_emptiness=trace.starvation_epochs[0][0] if trace.starvation_epochs else None,
        optimal_fraction=trace.optimal_fraction,
        rebuffer_time=trace.total_rebuffer_time,
        initial_delay=trace.initial_delay,
    )


def replicate(
    params: SessionParams,
    arrivals: ArrivalProcess,
    runs: int,
    base_seed: int,
    workers: int = 1,
) -> EmpiricalStats:
    """
    Run independent sessions with seeds base_seed + i and aggregate them in run order.

    Args:
        params: Session parameters
        arrivals: Frame-arrival process
        runs: Number of sessions, at least 1
        base_seed: Seed of run 0
        workers: Processes to spread the runs over

    Returns:
        EmpiricalStats
    """
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}")
    jobs = [(params, arrivals, base_seed + i) for i in range(runs)]
    logger.info(f"Simulating {runs} sessions (N={params.file_size_N}, rho={params.rho:.4g}, workers={workers})")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            summaries = list(executor.map(_summarize, jobs, chunksize=max(1, runs // (4 * workers))))
    else:
        summaries = [_summarize(job) for job in jobs]
    if runs == 1:
        logger.warning("Single run: standard errors are undefined")

    counts = np.array([s.starvations for s in summaries])
    pmf_hat = [proportion_estimate(int(np.sum(counts == j)), runs) for j in range(int(counts.max()) + 1)]
    return EmpiricalStats(
        runs=runs,
        starvation_prob_hat=proportion_estimate(int(np.sum(counts >= 1)), runs),
        pmf_hat=pmf_hat,
        mean_quality_fraction=mean_estimate([s.optimal_fraction for s in summaries]),
        mean_rebuffer_time=mean_estimate([s.rebuffer_time for s in summaries]),
        mean_initial_delay=mean_estimate([s.initial_delay for s in summaries]),
        mean_starvations=mean_estimate(counts),
        counts=counts,
        first_emptiness=[s.first_emptiness for s in summaries],
    )


@dataclass
class ChainSample:
    """Per-run outcome of the quality chain from its start state to absorption."""

    absorption_time: np.ndarray
    low_time: np.ndarray

    @property
    def high_time(self) -> np.ndarray:
        return self.absorption_time - self.low_time


def _walk_to_absorption(
    start: int, absorbing: int, lam: float, mu: float, runs: int, rng: np.random.Generator
) -> ChainSample:
    """Vectorised birth-death walk; time spent below state 0 counts as low quality."""
    if not 0 <= lam < mu:
        raise RegimeError(f"chain simulation needs 0 <= lambda < mu, got lambda={lam}, mu={mu}")
    state = np.full(runs, start)
    elapsed = np.zeros(runs)
    low = np.zeros(runs)
    alive = np.ones(runs, dtype=bool)
    up = lam / (lam + mu)
    steps = 0
    while alive.any():
        steps += 1
        if steps > Config.CHAIN_MAX_STEPS:
            raise BudgetError(f"quality chain did not absorb within {Config.CHAIN_MAX_STEPS} steps")
        idx = np.flatnonzero(alive)
        hold = rng.exponential(1.0 / (lam + mu), len(idx))
        elapsed[idx] += hold
        low[idx] += np.where(state[idx] < 0, hold, 0.0)
        state[idx] += np.where(rng.random(len(idx)) < up, 1, -1)
        alive[idx] = state[idx] > absorbing
    return ChainSample(absorption_time=elapsed, low_time=low)


def simulate_quality_chain(x: int, phi: int, lam: float, mu: float, runs: int, seed: int) -> ChainSample:
    """Monte Carlo of the A - D chain from state x until it first hits -phi."""
    return _walk_to_absorption(x, -phi, lam, mu, runs, make_rng(seed))


def simulate_busy_periods(lam: float, mu: float, spells: int, seed: int) -> np.ndarray:
    """Durations of optimal-quality spells: state 0 down to state -1."""
    return _walk_to_absorption(0, -1, lam, mu, spells, make_rng(seed)).absorption_time


def write_trace_csv(trace: SessionTrace, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "type", "buffer_level", "state_n"])
        for record in trace.records:
            writer.writerow([repr(float(record.time)), record.event_type.value, record.buffer_level, record.state_n])
