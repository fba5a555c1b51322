#!/usr/bin/env python3
"""
Tests for the playback simulator: BSC playback rules, arrival processes,
replication and agreement with the analytic starvation model.
"""

import csv
import logging
import os

import numpy as np
import pytest
from scipy import stats

from app.ballot_analysis import starvation_count_pmf, starvation_prob
from app.des_simulator import (
    Estimate,
    EventType,
    QualityLevel,
    make_rng,
    mean_estimate,
    proportion_estimate,
    replicate,
    sample_arrival_times,
    simulate_session,
    write_trace_csv,
)
from app.models import ArrivalKind, ArrivalProcess
from app.qoe_planner import baseline_starvation_prob
from app.stream_model import event_probs, first_emptiness_kernel
from conftest import make_params


def draws(params, arrivals, seed):
    """Arrival and display times exactly as simulate_session draws them."""
    rng = make_rng(seed)
    arrival_times = sample_arrival_times(arrivals, params.file_size_N, rng)
    service_times = rng.exponential(1.0 / params.mu, params.file_size_N)
    return arrival_times, service_times


def records_of(trace, event_type):
    return [record for record in trace.records if record.event_type == event_type]


class TestPlaybackRules:
    def test_same_seed_same_session(self):
        params = make_params(150, 5, 8, rho=0.85)
        arrivals = ArrivalProcess.poisson(params.lam)
        first = simulate_session(params, arrivals, seed=42)
        second = simulate_session(params, arrivals, seed=42)
        assert first.starvation_epochs == second.starvation_epochs
        assert first.quality_intervals == second.quality_intervals
        assert first.records == second.records

    def test_time_is_conserved(self):
        params = make_params(200, 4, 6, rho=0.8)
        arrivals = ArrivalProcess.poisson(params.lam)
        trace = simulate_session(params, arrivals, seed=9)
        _, service_times = draws(params, arrivals, 9)
        assert trace.completed
        assert trace.playback_time == pytest.approx(service_times.sum(), rel=1e-9)
        end = trace.initial_delay + service_times.sum() + trace.total_rebuffer_time
        assert trace.records[-1].event_type == EventType.DISPLAY
        assert trace.records[-1].time == pytest.approx(end, rel=1e-9)

    def test_counts_are_consistent(self):
        params = make_params(300, 3, 4, rho=0.7)
        trace = simulate_session(params, ArrivalProcess.poisson(params.lam), seed=5)
        assert trace.starvation_count == len(trace.starvation_epochs)
        assert trace.starvation_count == len(trace.rebuffer_delays)
        assert len(records_of(trace, EventType.ARRIVAL)) <= 300
        assert len(records_of(trace, EventType.DISPLAY)) == 300
        positions = [frame for frame, _ in trace.starvation_epochs]
        assert positions == sorted(set(positions))

    def test_initial_delay_is_xth_arrival(self):
        params = make_params(50, 4, 3, rho=0.8)
        arrivals = ArrivalProcess.poisson(params.lam)
        trace = simulate_session(params, arrivals, seed=3)
        arrival_times, _ = draws(params, arrivals, 3)
        assert trace.initial_delay == arrival_times[3]

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_rebuffering_waits_for_x_more_frames(self, seed):
        params = make_params(400, 3, 5, rho=0.75)
        arrivals = ArrivalProcess.poisson(params.lam)
        trace = simulate_session(params, arrivals, seed=seed)
        arrival_times, _ = draws(params, arrivals, seed)
        resumed = records_of(trace, EventType.REBUFFER_END)
        assert len(resumed) == trace.starvation_count
        for (frame, _), record in zip(trace.starvation_epochs, resumed):
            assert record.time == arrival_times[min(frame + 3, 400) - 1]

    def test_late_starvation_leaves_offset_frames_owed(self):
        params = make_params(500, 3, 4, rho=0.7)
        trace = simulate_session(params, ArrivalProcess.poisson(params.lam), seed=17)
        starved = records_of(trace, EventType.STARVATION)
        assert starved
        # A = D in the early regime, A = D - phi + 1 once base layers run ahead
        assert {record.state_n for record in starved} <= {0, -3}
        assert all(record.buffer_level == 0 for record in starved)

    def test_fast_network_never_starves(self):
        params = make_params(200, 5, 1, rho=50.0)
        for seed in range(5):
            assert simulate_session(params, ArrivalProcess.poisson(params.lam), seed=seed).starvation_count == 0

    def test_slow_network_starves(self):
        params = make_params(100, 2, 1, rho=0.2)
        result = replicate(params, ArrivalProcess.poisson(params.lam), runs=50, base_seed=1)
        assert result.starvation_prob_hat.value > 0.95

    def test_no_offset_plays_optimal_only(self):
        params = make_params(300, 5, 1, rho=0.8)
        trace = simulate_session(params, ArrivalProcess.poisson(params.lam), seed=4)
        assert trace.time_at(QualityLevel.LOW) == 0.0
        assert trace.optimal_fraction == 1.0

    def test_offset_plays_base_layer(self):
        params = make_params(300, 2, 6, rho=0.7)
        arrivals = ArrivalProcess.poisson(params.lam)
        traces = [simulate_session(params, arrivals, seed=seed) for seed in range(5)]
        assert all(trace.time_at(QualityLevel.LOW) > 0 for trace in traces)
        assert any(records_of(trace, EventType.QUALITY_SWITCH) for trace in traces)
        for trace in traces:
            intervals = trace.quality_intervals
            for before, after in zip(intervals, intervals[1:]):
                assert after.start >= before.end
                if after.start == before.end:
                    assert after.level != before.level

    def test_trace_csv(self, tmp_path):
        params = make_params(30, 2, 2, rho=0.9)
        trace = simulate_session(params, ArrivalProcess.poisson(params.lam), seed=8)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, str(path))
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["time", "type", "buffer_level", "state_n"]
        assert len(rows) == len(trace.records) + 1
        assert {row[1] for row in rows[1:]} <= {event.value for event in EventType}


class TestArrivalProcesses:
    @pytest.mark.parametrize("kind", list(ArrivalKind))
    def test_mean_rate_matches(self, kind):
        process = ArrivalProcess.for_mean_rate(kind, 0.8)
        assert process.mean_rate == pytest.approx(0.8)
        assert process.assumed_shape == (kind != ArrivalKind.POISSON)

    @pytest.mark.parametrize("kind,tolerance", [
        (ArrivalKind.POISSON, 0.02),
        (ArrivalKind.LOGISTIC, 0.02),
        (ArrivalKind.ON_OFF, 0.06),
    ])
    def test_long_run_rate(self, kind, tolerance):
        process = ArrivalProcess.for_mean_rate(kind, 2.0)
        times = sample_arrival_times(process, 400_000, make_rng(77))
        assert np.all(np.diff(times) >= 0)
        assert len(times) / times[-1] == pytest.approx(2.0, rel=tolerance)

    @pytest.mark.parametrize("process", [
        ArrivalProcess.poisson(0.5),
        ArrivalProcess.logistic(location=2.0, scale=0.4),
        ArrivalProcess.on_off(on_rate=2.0, on_duration_mean=6.0, off_duration_mean=2.0),
    ])
    def test_rescaled_keeps_shape(self, process):
        scaled = process.scaled_to(3.0)
        assert scaled.kind == process.kind
        assert scaled.mean_rate == pytest.approx(3.0)
        if process.kind == ArrivalKind.LOGISTIC:
            assert scaled.scale / scaled.location == pytest.approx(process.scale / process.location)
        if process.kind == ArrivalKind.ON_OFF:
            duty = scaled.on_duration_mean / (scaled.on_duration_mean + scaled.off_duration_mean)
            assert duty == pytest.approx(0.75)

    def test_logistic_gaps_positive(self):
        process = ArrivalProcess.logistic(location=1.0, scale=0.6)
        times = sample_arrival_times(process, 20_000, make_rng(3))
        assert times[0] > 0
        assert np.all(np.diff(times) > 0)

    def test_on_off_has_silent_periods(self):
        process = ArrivalProcess.on_off(on_rate=5.0, on_duration_mean=10.0, off_duration_mean=10.0)
        gaps = np.diff(sample_arrival_times(process, 5_000, make_rng(12)))
        # an exponential gap at rate 5 beyond 3 time units is essentially impossible
        assert np.sum(gaps > 3.0) > 10

    def test_missing_parameters_rejected(self):
        with pytest.raises(ValueError):
            ArrivalProcess(kind=ArrivalKind.LOGISTIC, location=1.0)


class TestEstimates:
    def test_proportion(self):
        estimate = proportion_estimate(25, 100)
        assert estimate.value == 0.25
        assert estimate.stderr == pytest.approx(np.sqrt(0.25 * 0.75 / 100))
        assert estimate.ci[0] < 0.25 < estimate.ci[1]

    def test_mean(self):
        estimate = mean_estimate(np.array([1.0, 2.0, 3.0, 4.0]))
        assert estimate.value == 2.5
        assert estimate.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)

    def test_single_sample_has_no_error(self):
        assert mean_estimate(np.array([3.0])).stderr is None
        assert proportion_estimate(1, 1).ci is None

    def test_to_dict(self):
        assert Estimate(0.5, 0.1, (0.3, 0.7)).to_dict() == {
            "value": 0.5, "stderr": 0.1, "ci_low": 0.3, "ci_high": 0.7,
        }
        assert Estimate(1.0).to_dict()["stderr"] is None


class TestReplicate:
    def test_single_run_warns(self, caplog):
        params = make_params(40, 3, 2, rho=0.9)
        with caplog.at_level(logging.WARNING):
            result = replicate(params, ArrivalProcess.poisson(params.lam), runs=1, base_seed=10)
        assert result.starvation_prob_hat.stderr is None
        assert result.mean_quality_fraction.stderr is None
        assert "Single run" in caplog.text

    def test_rejects_zero_runs(self):
        params = make_params(40, 3, 2, rho=0.9)
        with pytest.raises(ValueError):
            replicate(params, ArrivalProcess.poisson(params.lam), runs=0, base_seed=10)

    def test_run_i_uses_seed_base_plus_i(self):
        params = make_params(80, 3, 3, rho=0.8)
        arrivals = ArrivalProcess.poisson(params.lam)
        result = replicate(params, arrivals, runs=4, base_seed=100)
        expected = [simulate_session(params, arrivals, 100 + i, record_trace=False).starvation_count for i in range(4)]
        assert list(result.counts) == expected

    def test_worker_count_does_not_change_results(self):
        params = make_params(80, 3, 3, rho=0.8)
        arrivals = ArrivalProcess.poisson(params.lam)
        serial = replicate(params, arrivals, runs=12, base_seed=7, workers=1)
        pooled = replicate(params, arrivals, runs=12, base_seed=7, workers=2)
        assert list(serial.counts) == list(pooled.counts)
        assert serial.first_emptiness == pooled.first_emptiness
        assert serial.to_dict() == pooled.to_dict()

    def test_pmf_sums_to_one(self):
        params = make_params(120, 3, 2, rho=0.8)
        result = replicate(params, ArrivalProcess.poisson(params.lam), runs=200, base_seed=1)
        assert sum(estimate.value for estimate in result.pmf_hat) == pytest.approx(1.0)
        assert result.at_least(1).value == result.starvation_prob_hat.value


def _band(analytic, runs, sigmas):
    """Half-width of the acceptance band around an analytic probability."""
    return sigmas * np.sqrt(analytic * (1.0 - analytic) / runs) + 1.0 / runs


class TestAgainstAnalytic:
    def test_starvation_probability(self):
        params = make_params(200, 10, 5, rho=0.9)
        runs = 2000
        result = replicate(params, ArrivalProcess.poisson(params.lam), runs=runs, base_seed=2024)
        pmf = starvation_count_pmf(params)
        analytic = starvation_prob(params)
        assert abs(result.starvation_prob_hat.value - analytic) < _band(analytic, runs, 4)
        for j in (1, 2):
            assert abs(result.at_least(j).value - pmf.at_least(j)) < _band(pmf.at_least(j), runs, 4)

    def _first_emptiness_pvalue(self, runs, seed):
        params = make_params(60, 3, 1, rho=0.8)
        result = replicate(params, ArrivalProcess.poisson(params.lam), runs=runs, base_seed=seed)
        p, q = event_probs(params)
        kernel = first_emptiness_kernel(3, 59, p, q)
        positions = np.array([k if k is not None else -1 for k in result.first_emptiness])
        expected = list(kernel[3:60] * runs) + [(1.0 - kernel.sum()) * runs]
        observed = [int(np.sum(positions == k)) for k in range(3, 60)] + [int(np.sum(positions == -1))]
        assert int(np.sum((positions >= 0) & (positions < 3))) == 0

        merged_obs, merged_exp = [], []
        acc_obs, acc_exp = 0, 0.0
        for o, e in zip(observed, expected):
            acc_obs += o
            acc_exp += e
            if acc_exp >= 5.0:
                merged_obs.append(acc_obs)
                merged_exp.append(acc_exp)
                acc_obs, acc_exp = 0, 0.0
        merged_obs[-1] += acc_obs
        merged_exp[-1] += acc_exp
        return stats.chisquare(merged_obs, f_exp=merged_exp).pvalue

    def test_first_emptiness_positions(self):
        assert self._first_emptiness_pvalue(3000, 31) > 0.01

    @pytest.mark.slow
    def test_first_emptiness_positions_full_scale(self):
        assert self._first_emptiness_pvalue(10_000, 2016) > 0.01

    def test_logistic_bsc_beats_poisson_without_bsc(self):
        runs = 300
        bsc = make_params(150, 10, 10, rho=0.95)
        plain = bsc.with_changes(offset_phi=1)
        logistic = replicate(bsc, ArrivalProcess.for_mean_rate(ArrivalKind.LOGISTIC, bsc.lam), runs, 5)
        poisson = replicate(plain, ArrivalProcess.poisson(plain.lam), runs, 5)
        assert logistic.starvation_prob_hat.value < poisson.starvation_prob_hat.value

    @pytest.mark.slow
    @pytest.mark.parametrize("N", [200, 600, 1000, 1500])
    def test_starvation_curve_across_loads(self, N):
        runs = 4000
        workers = os.cpu_count() or 1
        analytic = []
        for i, rho in enumerate((0.9, 0.95, 1.1)):
            params = make_params(N, 40, 50, rho=rho)
            result = replicate(params, ArrivalProcess.poisson(params.lam), runs, 1000 * i + N, workers=workers)
            value = starvation_prob(params)
            assert abs(result.starvation_prob_hat.value - value) < _band(value, runs, 3)
            assert value <= baseline_starvation_prob(N, 40, *event_probs(params))
            analytic.append(value)
        assert analytic == sorted(analytic, reverse=True)

    @pytest.mark.slow
    @pytest.mark.parametrize("N", [300, 800, 1500, 3000])
    def test_starvation_count_curves(self, N):
        runs = 4000
        params = make_params(N, 40, 50, rho=0.66)
        result = replicate(params, ArrivalProcess.poisson(params.lam), runs, N, workers=os.cpu_count() or 1)
        pmf = starvation_count_pmf(params)
        none = pmf.probs[0]
        assert abs(result.pmf_hat[0].value - none) < _band(none, runs, 3)
        for j in (1, 2):
            value = pmf.at_least(j)
            assert abs(result.at_least(j).value - value) < _band(value, runs, 3)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
