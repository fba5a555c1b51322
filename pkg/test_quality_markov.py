#!/usr/bin/env python3
"""
Tests for the quality-switching chain: quasi-stationary distribution, absorption
time, quality times and busy-period moments, with Monte Carlo cross-checks.
"""

import numpy as np
import pytest

from app.des_simulator import simulate_busy_periods, simulate_quality_chain
from app.models import RegimeError
from app.quality_markov import (
    absorption_time,
    balance_residuals,
    busy_period_stats,
    quality_times,
    quasi_stationary,
)

GRID = [(x, phi, rho) for x in (1, 2, 5, 40) for phi in (1, 2, 7, 50) for rho in (0.0, 0.3, 0.66, 0.95)]


class TestQuasiStationary:
    def test_worked_example(self):
        dist = quasi_stationary(1, 1, 0.5)
        assert dist.prob(0) == pytest.approx(0.25)
        assert dist.prob(1) == pytest.approx(0.375)
        for j in range(2, 10):
            assert dist.prob(j) == pytest.approx(0.375 * 0.5 ** (j - 1))
        assert dist.total() == pytest.approx(1.0, abs=1e-12)

    def test_no_arrivals_limit(self):
        dist = quasi_stationary(3, 4, 0.0)
        for j in range(-3, 4):
            assert dist.prob(j) == pytest.approx(1 / 7)
        assert dist.prob(4) == 0.0
        assert dist.tail_mass == 0.0

    @pytest.mark.parametrize("x,phi,rho", GRID)
    def test_normalization(self, x, phi, rho):
        dist = quasi_stationary(x, phi, rho)
        assert dist.total() == pytest.approx(1.0, abs=1e-12)
        assert dist.tail_mass <= 1e-9 * (1 + 1e-9)
        assert dist.states[0] == -phi + 1

    @pytest.mark.parametrize("x,phi,rho", GRID)
    def test_balance_equations(self, x, phi, rho):
        lam, mu = rho, 1.0
        dist = quasi_stationary(x, phi, rho)
        assert np.max(np.abs(balance_residuals(dist, lam, mu))) < 1e-10

    def test_enumerated_part_matches_closed_form(self):
        dist = quasi_stationary(5, 3, 0.8)
        for state, prob in zip(dist.states, dist.q):
            assert prob == pytest.approx(dist.prob(int(state)), rel=1e-12)

    @pytest.mark.parametrize("rho", [1.0, 1.3])
    def test_rejects_unstable_load(self, rho):
        with pytest.raises(RegimeError):
            quasi_stationary(4, 2, rho)


class TestAbsorptionTime:
    def test_reference_point(self):
        assert absorption_time(40, 50, 0.95, 1.0) == pytest.approx(1800.0)

    def test_pure_death_chain(self):
        assert absorption_time(3, 2, 0.0, 2.0) == pytest.approx(2.5)

    def test_rejects_divergent_regime(self):
        with pytest.raises(RegimeError):
            absorption_time(3, 2, 1.0, 1.0)

    def test_rejects_zero_offset(self):
        with pytest.raises(RegimeError):
            absorption_time(3, 0, 0.5, 1.0)

    def test_monte_carlo_first_passage(self):
        sample = simulate_quality_chain(40, 50, 0.95, 1.0, runs=600, seed=11)
        mean = sample.absorption_time.mean()
        se = sample.absorption_time.std(ddof=1) / np.sqrt(600)
        assert abs(mean - 1800.0) < 4 * se

    @pytest.mark.slow
    def test_monte_carlo_first_passage_full_scale(self):
        sample = simulate_quality_chain(40, 50, 0.95, 1.0, runs=4000, seed=2016)
        mean = sample.absorption_time.mean()
        se = sample.absorption_time.std(ddof=1) / np.sqrt(4000)
        assert abs(mean - 1800.0) < 3 * se


class TestQualityTimes:
    def test_no_offset_means_no_low_quality(self):
        times = quality_times(10, 1, 0.8, 1.0, 1000, 2500)
        assert times.T_low == 0.0
        assert times.b_avg == pytest.approx(2500)

    def test_flat_ladder(self):
        times = quality_times(7, 9, 0.6, 1.0, 1200, 1200)
        assert times.b_avg == pytest.approx(1200)

    @pytest.mark.parametrize("x,phi,lam,mu", [(40, 50, 0.95, 1.0), (2, 3, 0.2, 0.5), (5, 20, 12.0, 25.0)])
    def test_times_add_up(self, x, phi, lam, mu):
        times = quality_times(x, phi, lam, mu, 1000, 2500)
        assert times.T_low >= 0 and times.T_high >= 0
        assert times.T_low + times.T_high == pytest.approx(times.E_tau, rel=1e-9)
        assert times.E_tau == pytest.approx(absorption_time(x, phi, lam, mu))

    def test_state_times_sum_to_absorption_time(self):
        dist = quasi_stationary(4, 6, 0.7)
        e_tau = absorption_time(4, 6, 0.7, 1.0)
        assert (dist.q.sum() + dist.tail_mass) * e_tau == pytest.approx(e_tau, rel=1e-12)

    @pytest.mark.parametrize("rho", [0.3, 0.66, 0.95])
    @pytest.mark.parametrize("x", [1, 10, 40])
    def test_low_fraction_grows_with_offset(self, x, rho):
        fractions = [quality_times(x, phi, rho, 1.0, 1000, 2500).low_fraction for phi in range(1, 80, 3)]
        assert all(b >= a - 1e-12 for a, b in zip(fractions, fractions[1:]))

    def test_rejects_unstable_load(self):
        with pytest.raises(RegimeError):
            quality_times(4, 2, 1.0, 1.0, 1000, 2500)

    def test_monte_carlo_low_quality_time(self):
        runs = 600
        times = quality_times(40, 50, 0.95, 1.0, 1000, 2500)
        sample = simulate_quality_chain(40, 50, 0.95, 1.0, runs=runs, seed=7)
        se = sample.low_time.std(ddof=1) / np.sqrt(runs)
        assert abs(sample.low_time.mean() - times.T_low) < 4 * se

    @pytest.mark.slow
    def test_average_bitrate_against_simulation(self):
        """
        The absorbing runs are walks of the quality chain from x to -phi. They
        stand in for playback sessions, which end with the file rather than at the
        first starvation and start from an empty buffer.
        """
        runs = 4000
        times = quality_times(40, 50, 0.95, 1.0, 1000, 2500)
        sample = simulate_quality_chain(40, 50, 0.95, 1.0, runs=runs, seed=404)
        bits = sample.low_time * 1000 + sample.high_time * 2500
        # ratio estimator with a delta-method standard error
        ratio = bits.sum() / sample.absorption_time.sum()
        residual = bits - ratio * sample.absorption_time
        se = residual.std(ddof=1) / (np.sqrt(runs) * sample.absorption_time.mean())
        assert abs(ratio - times.b_avg) < 3 * se


class TestBusyPeriod:
    def test_single_service(self):
        stats = busy_period_stats(0.0, 2.0)
        assert stats.mean == pytest.approx(0.5)
        assert stats.variance == pytest.approx(0.25)

    def test_half_load(self):
        stats = busy_period_stats(0.5, 1.0)
        assert stats.mean == pytest.approx(2.0)
        assert stats.variance == pytest.approx(12.0)

    @pytest.mark.parametrize("rho", [0.05, 0.3, 0.6, 0.9, 0.99])
    def test_variance_at_least_mean_squared(self, rho):
        stats = busy_period_stats(rho, 1.0)
        assert stats.variance >= stats.mean ** 2

    def test_rejects_unstable_load(self):
        with pytest.raises(RegimeError):
            busy_period_stats(1.0, 1.0)

    def _check_spells(self, spells, seed, band):
        durations = simulate_busy_periods(0.5, 1.0, spells, seed)
        stats = busy_period_stats(0.5, 1.0)
        n = len(durations)
        mean_se = durations.std(ddof=1) / np.sqrt(n)
        assert abs(durations.mean() - stats.mean) < band * mean_se
        centered = durations - durations.mean()
        var_se = np.sqrt((np.mean(centered ** 4) - np.var(durations) ** 2) / n)
        assert abs(durations.var(ddof=1) - stats.variance) < band * var_se

    def test_spells_against_formula(self):
        self._check_spells(4000, 5, band=4)

    @pytest.mark.slow
    def test_spells_full_scale(self):
        self._check_spells(10000, 2016, band=3)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
