import math
from fractions import Fraction

import numpy as np
import pytest

from cascadelab import (
    ConstantSchedule,
    DomainError,
    ErrorSeries,
    Mode,
    ResourceLimitError,
    StepOptions,
    ZeroSchedule,
    enumerate_oracle,
    error_series,
    init_distribution,
    map_error,
    optimal_schedule,
    step,
)
from cascadelab.exact import RatioDistribution, _merge_sorted, martingale_residual, regime_masses

COARSE = StepOptions(merge_tol=1e-4, prune_floor=1e-15)


def _dist_from(log_ratios, masses):
    order = np.argsort(log_ratios)
    return RatioDistribution(
        t=0,
        mode=Mode.FLOAT,
        log_ratios=np.asarray(log_ratios, dtype=float)[order],
        masses=np.asarray(masses, dtype=float)[order],
        pruned_mass=0.0,
        pruned_theta2_mass=0.0,
    )


class TestInitAndStep:
    def test_init_float(self):
        dist = init_distribution()
        assert dist.t == 0
        assert dist.log_ratios.tolist() == [0.0]
        assert dist.masses.tolist() == [1.0]
        assert martingale_residual(dist) == 0.0

    def test_init_rational(self):
        dist = init_distribution(Mode.RATIONAL)
        assert dist.exact_states == ((Fraction(1), Fraction(1)),)
        assert martingale_residual(dist) == 0

    def test_first_step_all_revealers(self, params21):
        dist = step(init_distribution(), ConstantSchedule(1.0), params21)
        assert dist.t == 1
        assert dist.log_ratios == pytest.approx([-math.log(2), math.log(2)])
        assert dist.masses == pytest.approx([1 / 3, 2 / 3])

    def test_first_step_no_revealers_is_identical(self, params21):
        with_revealers = step(init_distribution(), ConstantSchedule(1.0), params21)
        without = step(init_distribution(), ZeroSchedule(), params21)
        assert np.array_equal(with_revealers.log_ratios, without.log_ratios)
        assert np.array_equal(with_revealers.masses, without.masses)

    def test_cascade_state_is_fixed_point_without_revealers(self, params21):
        j = 2 * math.log(2)
        dist = step(_dist_from([j], [1.0]), ZeroSchedule(), params21)
        assert dist.log_ratios.tolist() == [j]
        assert dist.masses.tolist() == [1.0]


class TestMapError:
    def test_initial_state(self, params21):
        assert map_error(init_distribution(), params21) == pytest.approx(1 / 3, abs=1e-15)

    def test_pure_cascades(self, params21):
        up = _dist_from([2 * math.log(2)], [1.0])
        down = _dist_from([-2 * math.log(2)], [1.0])
        assert map_error(up, params21) == 0.0
        assert map_error(down, params21) == 1.0


class TestRationalGroundTruth:
    def test_zero_schedule_exact_values(self, params21):
        series = error_series(params21, ZeroSchedule(), 5, StepOptions(), Mode.RATIONAL)
        assert series.e_t == [
            Fraction(1, 3),
            Fraction(1, 3),
            Fraction(7, 27),
            Fraction(7, 27),
            Fraction(55, 243),
        ]
        assert all(r == 0 for r in series.mass_residual)
        assert all(r == 0 for r in series.martingale_residual)
        assert series.ne_t[2] == Fraction(1, 3) + Fraction(1, 3) + Fraction(7, 27)

    def test_all_revealers_error_is_signal_error(self, params21):
        series = error_series(params21, ConstantSchedule(1.0), 8, StepOptions(), Mode.RATIONAL)
        assert all(e == Fraction(1, 3) for e in series.e_t)

    def test_float_matches_rational(self, params21):
        exact = error_series(params21, ZeroSchedule(), 12, StepOptions(), Mode.RATIONAL)
        approx = error_series(params21, ZeroSchedule(), 12)
        for a, b in zip(exact.e_t, approx.e_t):
            assert abs(float(a) - b) < 1e-14

    def test_rational_needs_rational_schedule(self, params21):
        with pytest.raises(DomainError):
            error_series(params21, optimal_schedule(params21, 0.1), 3, StepOptions(), Mode.RATIONAL)


class TestOracle:
    def test_matches_dp_small_horizon(self, params21, params32):
        for prm in (params21, params32):
            for sched in (optimal_schedule(prm, 0.1), ZeroSchedule(), ConstantSchedule(0.3)):
                dp = error_series(prm, sched, 10)
                oracle = enumerate_oracle(prm, sched, 10)
                for col in ("e_t", "map_error", "ne_t", "prob_cascade_down", "prob_social_or_down"):
                    for a, b in zip(getattr(dp, col), getattr(oracle, col)):
                        assert abs(a - b) <= 1e-12

    def test_rational_oracle_exact(self, params21):
        oracle = enumerate_oracle(params21, ZeroSchedule(), 3, Mode.RATIONAL)
        assert oracle.e_t == [Fraction(1, 3), Fraction(1, 3), Fraction(7, 27)]
        assert all(m == 0 for m in oracle.martingale_residual)

    def test_all_revealers(self, params21):
        oracle = enumerate_oracle(params21, ConstantSchedule(1.0), 5)
        assert oracle.e_t == pytest.approx([1 / 3] * 5, abs=1e-15)

    def test_cap(self, params21):
        with pytest.raises(DomainError):
            enumerate_oracle(params21, ZeroSchedule(), 25)

    def test_validates_horizon(self, params21):
        with pytest.raises(DomainError):
            enumerate_oracle(params21, ZeroSchedule(), 0)


class TestInvariants:
    def test_mass_and_martingale_on_optimal(self, params21):
        series = error_series(params21, optimal_schedule(params21, 0.1), 64, COARSE)
        assert max(float(r) for r in series.mass_residual) <= 1e-12
        for i in range(64):
            slack = float(series.martingale_residual[i]) - float(series.pruned_theta2_mass[i])
            assert slack <= 1e-9

    def test_sandwich_and_lower_bound(self, params21):
        series = error_series(params21, ConstantSchedule(0.3), 40)
        for t in range(1, 41):
            me = series.map_error[t - 1]
            if t == 1:
                down_prev, socdown_prev = 0.0, 1.0
            else:
                down_prev = series.prob_cascade_down[t - 2]
                socdown_prev = series.prob_social_or_down[t - 2]
            assert down_prev <= me <= socdown_prev
            assert series.e_t[t - 1] >= params21.p_disagree * series.p_t[t - 1]

    def test_lower_bound_equality_conditions(self, params21):
        # p = 1 forces equality; p < 1 with positive MAP error is strict.
        ones = error_series(params21, ConstantSchedule(1.0), 5)
        for t in range(1, 6):
            assert ones.e_t[t - 1] == params21.p_disagree * ones.p_t[t - 1]
        mixed = error_series(params21, ConstantSchedule(0.3), 5)
        for t in range(1, 6):
            assert mixed.e_t[t - 1] > params21.p_disagree * mixed.p_t[t - 1]

    def test_zero_schedule_cascade_absorption(self, params21):
        series = error_series(params21, ZeroSchedule(), 60)
        cascade = [
            series.prob_cascade_down[i] + (1.0 - series.prob_social_or_down[i])
            for i in range(60)
        ]
        assert all(b >= a - 1e-15 for a, b in zip(cascade, cascade[1:]))

    def test_first_two_players_follow_signals(self, params21):
        for sched in (ZeroSchedule(), ConstantSchedule(0.7), optimal_schedule(params21, 0.1)):
            d1 = step(init_distribution(), sched, params21)
            d2 = step(d1, sched, params21)
            edge = params21.log_ratio
            assert d1.log_ratios == pytest.approx([-edge, edge])
            assert d1.masses == pytest.approx([1 / 3, 2 / 3])
            assert d2.log_ratios == pytest.approx([-2 * edge, 0.0, 2 * edge])
            assert d2.masses == pytest.approx([1 / 9, 4 / 9, 4 / 9])

    def test_ne_is_cumulative(self, params21):
        series = error_series(params21, ConstantSchedule(0.3), 20)
        running = 0.0
        for t in range(1, 21):
            running += series.e_t[t - 1]
            assert series.ne_t[t - 1] == pytest.approx(running, rel=1e-14)
            assert series.te_t[t - 1] == t * series.e_t[t - 1]


class TestMergeAndPrune:
    def test_exact_duplicates_merge_bitwise(self):
        j = np.array([0.25, 0.25, 0.75])
        m = np.array([0.2, 0.3, 0.5])
        merged_j, merged_m = _merge_sorted(j, m, 1e-9)
        assert merged_j.tolist() == [0.25, 0.75]
        assert merged_m.tolist() == [0.5, 0.5]

    def test_merge_preserves_theta2_mass(self):
        j = np.array([1.0, 1.0 + 3e-5, 1.0 + 7e-5])
        m = np.array([0.5, 0.25, 0.25])
        merged_j, merged_m = _merge_sorted(j, m, 1e-4)
        assert merged_j.size == 1
        before = float(np.sum(m * np.exp(-j)))
        after = float(merged_m[0] * math.exp(-merged_j[0]))
        assert after == pytest.approx(before, rel=1e-15)
        assert j[0] <= merged_j[0] <= j[-1]

    def test_merge_respects_regime_edges(self, params21):
        edge = params21.log_ratio
        j = np.array([edge, edge + 3e-7])  # social endpoint vs cascade dust
        m = np.array([0.9, 0.1])
        merged_j, _ = _merge_sorted(
            j, m, 1e-4, lower_edge=-edge - 1e-12, upper_edge=edge + 1e-12
        )
        assert merged_j.size == 2

    def test_pruning_is_accounted(self, params21):
        opts = StepOptions(merge_tol=1e-9, prune_floor=0.05)
        series = error_series(params21, ZeroSchedule(), 10, opts)
        assert float(series.pruned_mass[-1]) > 0.0
        assert max(float(r) for r in series.mass_residual) <= 1e-12
        for i in range(10):
            slack = float(series.martingale_residual[i]) - float(series.pruned_theta2_mass[i])
            assert slack <= 1e-9

    def test_state_cap(self, params21):
        opts = StepOptions(max_states=2)
        with pytest.raises(ResourceLimitError):
            error_series(params21, ZeroSchedule(), 3, opts)


class TestSeriesShape:
    def test_csv_row_layout(self, params21):
        series = error_series(params21, ZeroSchedule(), 3)
        row = series.csv_row(3)
        assert row[0] == 3
        assert row[3] == series.e_t[2]
        assert len(row) == 10

    def test_requires_positive_horizon(self, params21):
        with pytest.raises(DomainError):
            error_series(params21, ZeroSchedule(), 0)
