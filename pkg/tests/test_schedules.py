import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascadelab import (
    ConstantSchedule,
    DomainError,
    ExplicitSchedule,
    PowerSchedule,
    ScheduleParseError,
    ZeroSchedule,
    cumulative_mass,
    kappa_star,
    optimal_schedule,
    parse_schedule,
    power_schedule,
    tau,
    validate_params,
)

# Independently computed with mpmath at 60 digits: sum of
# min(1.1 * 3 * kappa(2,1) / t, 1) over t = 1..10^4.
OPTIMAL_MASS_21_1E4 = 251.160675417


class TestOptimalSchedule:
    def test_clips_to_one_for_small_t(self, params21):
        sched = optimal_schedule(params21, 0.1)
        assert sched.evaluate(1) == 1.0
        assert sched.coefficient > 1.0

    def test_large_t_value(self, params21):
        sched = optimal_schedule(params21, 0.1)
        expected = 1.1 * 3.0 * kappa_star(params21) / 1e6
        assert sched.evaluate(10**6) == pytest.approx(expected, rel=1e-12)
        assert sched.evaluate(10**6) == pytest.approx(3.834e-5, rel=1e-3)

    @given(t=st.integers(min_value=1, max_value=10**9), eps=st.floats(0.01, 10.0))
    def test_always_a_probability(self, params21, t, eps):
        assert 0.0 <= optimal_schedule(params21, eps).evaluate(t) <= 1.0

    def test_t_times_p_constant_past_clip(self, params21):
        sched = optimal_schedule(params21, 0.1)
        first_unclipped = math.ceil(sched.coefficient)
        for t in (first_unclipped, 100, 10**4, 10**7):
            assert t * sched.evaluate(t) == pytest.approx(sched.coefficient, rel=1e-12)

    def test_epsilon_must_be_positive(self, params21):
        with pytest.raises(DomainError):
            optimal_schedule(params21, 0.0)

    def test_no_exact_rational_form(self, params21):
        with pytest.raises(DomainError):
            optimal_schedule(params21, 0.1).evaluate_exact(5)

    def test_squared_mass_converges(self, params21):
        sched = optimal_schedule(params21, 0.1)
        t = np.arange(1, 10**6 + 1, dtype=float)
        sq = np.minimum(sched.coefficient / t, 1.0) ** 2
        upto_1e5 = sq[: 10**5].sum()
        upto_1e6 = sq.sum()
        assert (upto_1e6 - upto_1e5) / upto_1e6 < 1e-3


class TestPowerSchedule:
    def test_values(self):
        assert power_schedule(0.5, 1.0).evaluate(5) == pytest.approx(0.1, abs=1e-15)
        assert power_schedule(1.0, 2.0).evaluate(1) == 1.0
        assert power_schedule(0.0, 3.0).evaluate(17) == 0.0

    def test_negative_coefficient_rejected(self):
        with pytest.raises(DomainError):
            power_schedule(-0.1, 1.0)

    def test_exact_rational_for_integer_alpha(self):
        assert power_schedule(0.5, 2.0).evaluate_exact(2) == Fraction(0.5) / 4
        with pytest.raises(DomainError):
            power_schedule(0.5, 1.5).evaluate_exact(2)


class TestSimpleFamilies:
    def test_constant(self):
        sched = ConstantSchedule(0.5)
        assert sched.evaluate(1) == sched.evaluate(999) == 0.5
        with pytest.raises(DomainError):
            ConstantSchedule(1.5)

    def test_zero(self):
        assert ZeroSchedule().evaluate(12) == 0.0
        assert ZeroSchedule().evaluate_exact(12) == 0

    def test_explicit_prefix_and_tail(self):
        sched = ExplicitSchedule((0.5, 0.25), tail=0.125)
        assert [sched.evaluate(t) for t in (1, 2, 3, 99)] == [0.5, 0.25, 0.125, 0.125]
        with pytest.raises(DomainError):
            ExplicitSchedule((0.5, 1.25))

    def test_time_index_starts_at_one(self):
        with pytest.raises(DomainError):
            ZeroSchedule().evaluate(0)


class TestCumulativeMass:
    def test_constant(self):
        assert cumulative_mass(ConstantSchedule(0.5), 10) == 5.0

    def test_zero(self):
        assert cumulative_mass(ZeroSchedule(), 1000) == 0.0

    def test_optimal_mass_reference(self, params21):
        mass = cumulative_mass(optimal_schedule(params21, 0.1), 10**4)
        assert mass == pytest.approx(OPTIMAL_MASS_21_1E4, abs=1e-6)
        # The min{., 1} clip keeps the early mass well below the pure 1/t
        # sum, so M_t / log t approaches its coefficient only slowly from
        # below; at t = 1e4 the ratio is still ~29% short.
        ratio = mass / math.log(10**4)
        assert 25.0 < ratio < optimal_schedule(params21, 0.1).coefficient

    def test_increments_match_evaluate(self, params21):
        sched = optimal_schedule(params21, 0.1)
        for t in (2, 40, 123):
            diff = cumulative_mass(sched, t) - cumulative_mass(sched, t - 1)
            assert diff == pytest.approx(sched.evaluate(t), abs=1e-12)

    @given(t=st.integers(min_value=2, max_value=300))
    def test_non_decreasing(self, t):
        sched = PowerSchedule(0.7, 1.0)
        assert cumulative_mass(sched, t) >= cumulative_mass(sched, t - 1)


class TestTau:
    def test_constant_hit(self):
        assert tau(ConstantSchedule(0.5), 2.0, 100) == 4

    def test_zero_never_reaches(self):
        assert tau(ZeroSchedule(), 1.0, 10**4) is None

    def test_zero_threshold(self):
        assert tau(ZeroSchedule(), 0.0, 10) == 1

    @given(s1=st.floats(0, 5), s2=st.floats(0, 5))
    def test_monotone(self, s1, s2):
        lo, hi = sorted((s1, s2))
        sched = PowerSchedule(0.9, 0.7)
        t_lo, t_hi = tau(sched, lo, 2000), tau(sched, hi, 2000)
        if t_lo is not None and t_hi is not None:
            assert t_lo <= t_hi


class TestParseSchedule:
    def test_families(self, params21):
        assert parse_schedule("zero") == ZeroSchedule()
        assert parse_schedule("const:p=0.2") == ConstantSchedule(0.2)
        assert parse_schedule("power:c=0.5,alpha=1") == PowerSchedule(0.5, 1.0)
        opt = parse_schedule("optimal:eps=0.1", params21)
        assert opt.epsilon == 0.1 and opt.params == params21

    def test_round_trip_through_spec_string(self, params21):
        for spec in ("zero", "const:p=0.2", "power:c=0.5,alpha=1", "optimal:eps=0.1"):
            sched = parse_schedule(spec, params21)
            assert parse_schedule(sched.spec_string(), params21) == sched

    def test_errors(self, params21):
        for bad in ("bogus", "const:q=0.2", "const:p=nope", "power:c=1", "optimal:eps=0"):
            with pytest.raises(ScheduleParseError):
                parse_schedule(bad, params21)
        with pytest.raises(ScheduleParseError):
            parse_schedule("optimal:eps=0.1")  # needs params

    def test_file_schedule(self, tmp_path, params21):
        good = tmp_path / "sched.txt"
        good.write_text("1.0\n0.5\n\n0.25\n")
        sched = parse_schedule(f"file:{good}", params21)
        assert [sched.evaluate(t) for t in (1, 2, 3, 4)] == [1.0, 0.5, 0.25, 0.0]

    def test_file_schedule_rejects_out_of_range(self, tmp_path):
        bad = tmp_path / "sched.txt"
        bad.write_text("0.5\n1.5\n")
        with pytest.raises(ScheduleParseError):
            parse_schedule(f"file:{bad}")

    def test_missing_file(self):
        with pytest.raises(ScheduleParseError):
            parse_schedule("file:/nonexistent/path.txt")
