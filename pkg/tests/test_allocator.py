# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Unit and property tests for the optimal allocation."""

import math
import random
from fractions import Fraction

import pytest

from cdcplan.core import JobSpec
from cdcplan.operations import allocator
from cdcplan.operations.allocator import (
    PARALLEL,
    SEQUENTIAL,
    compare_coded_uncoded,
    conv_envelope,
    envelope_eval,
    parallel_objective,
    plan_for,
    plan_parallel,
    plan_sequential,
    plan_uncoded,
    seq_objective,
    shuffle_load,
)

CASES = 1000


def _random_spec(rng: random.Random, q_max: int = 12) -> JobSpec:
    return JobSpec(
        q=rng.randint(1, q_max),
        n=1,
        c_m=Fraction(rng.randint(1, 60), rng.randint(1, 12)),
        c_s=Fraction(rng.randint(1, 60), rng.randint(1, 12)),
        c_r=Fraction(rng.randint(0, 5)),
    )


class TestSequentialPlan:
    """Unit tests for the sequential coded allocation."""

    @staticmethod
    def test_worked_example():
        """Test Q=3, c_m=1, c_s=2, c_r=1 gives r*=2, K*=5, T*=17/9."""
        plan = plan_sequential(JobSpec(3, 6, 1, 2, 1))
        assert plan.r_star == 2
        assert plan.k_star == 5
        assert plan.t_star == Fraction(17, 9)
        assert plan.t_map_pred == Fraction(2, 3)
        assert plan.t_shuffle_pred == Fraction(2, 9)
        assert plan.t_reduce_pred == 1
        assert plan.finite_k_achievable

    @staticmethod
    def test_no_repetition_needs_unbounded_servers():
        """Test an expensive Map gives r*=0 and no finite K*."""
        plan = plan_sequential(JobSpec(2, 1, 100, 1))
        assert plan.r_star == 0
        assert plan.k_star is None
        assert not plan.finite_k_achievable
        assert plan.t_star == 1
        assert plan.to_dict()["finite_k_achievable"] is False

    @staticmethod
    def test_full_repetition_uses_q_servers():
        """Test a cheap Map gives r*=Q and K*=Q."""
        plan = plan_sequential(JobSpec(3, 1, 1, 100))
        assert plan.r_star == 3
        assert plan.k_star == 3
        assert plan.t_shuffle_pred == 0

    @staticmethod
    def test_ties_pick_largest_minimizer():
        """Test equal objectives resolve to the largest r."""
        plan = plan_sequential(JobSpec(1, 1, 1, 1))
        assert plan.minimizers == (0, 1)
        assert plan.r_star == 1
        assert not plan.unique_minimizer

    @staticmethod
    @pytest.mark.parametrize("r", [-1, 4, Fraction(1, 2)])
    def test_objective_rejects_bad_r(r):
        """Test the objective is defined on integers 0..Q only."""
        with pytest.raises(ValueError, match="r must be an integer"):
            seq_objective(JobSpec(3, 1, 1, 1), r)

    @staticmethod
    def test_objective_is_convex():
        """Test second differences of the objective are nonnegative."""
        rng = random.Random(11)
        for _ in range(CASES):
            spec = _random_spec(rng)
            if spec.q < 2:
                continue
            r = rng.randint(1, spec.q - 1)
            left, mid, right = (seq_objective(spec, x) for x in (r - 1, r, r + 1))
            assert left + right >= 2 * mid

    @staticmethod
    def test_minimizer_is_near_stationary_point():
        """Test r* is within 1 of the clamped stationary point."""
        rng = random.Random(12)
        for _ in range(CASES):
            plan = plan_sequential(_random_spec(rng))
            assert abs(float(plan.r_star) - plan.r_star_approx) <= 1 + 1e-9

    @staticmethod
    def test_minimizer_is_largest_argmin():
        """Test r* minimises the objective and nothing larger ties."""
        rng = random.Random(13)
        for _ in range(CASES):
            spec = _random_spec(rng)
            plan = plan_sequential(spec)
            values = [seq_objective(spec, r) for r in range(spec.q + 1)]
            best = min(values)
            assert plan.t_star == best + spec.c_r
            assert plan.r_star == max(r for r, v in enumerate(values) if v == best)


class TestEnvelope:
    """Unit and property tests for the lower convex envelope."""

    @staticmethod
    def test_breakpoints_for_three_functions():
        """Test every integer point is on the hull for Q=3."""
        env = conv_envelope(3)
        assert env.breakpoints == (
            (0, Fraction(1)),
            (1, Fraction(1, 3)),
            (2, Fraction(1, 9)),
            (3, Fraction(0)),
        )

    @staticmethod
    def test_invalid_q_raises():
        """Test the envelope needs at least one function."""
        with pytest.raises(ValueError, match="Q must be positive"):
            conv_envelope(0)

    @staticmethod
    def test_eval_outside_range_raises():
        """Test evaluation is limited to [0, Q]."""
        with pytest.raises(ValueError, match="r must lie in"):
            envelope_eval(conv_envelope(2), Fraction(5, 2))

    @staticmethod
    def test_interpolation_is_exact():
        """Test integer points match the load and midpoints interpolate linearly."""
        rng = random.Random(21)
        for _ in range(CASES):
            q = rng.randint(1, 40)
            env = conv_envelope(q)
            r = rng.randint(0, q)
            assert envelope_eval(env, r) == shuffle_load(q, r)
            if r < q:
                t = Fraction(rng.randint(0, 97), 97)
                expected = (1 - t) * shuffle_load(q, r) + t * shuffle_load(q, r + 1)
                assert envelope_eval(env, r + t) == expected


class TestParallelPlan:
    """Unit and property tests for the parallel coded allocation."""

    @staticmethod
    def test_worked_example():
        """Test Q=3, c_m=1, c_s=2, c_r=1 gives r*=10/7, K*=6, T*=31/21."""
        plan = plan_parallel(JobSpec(3, 1, 1, 2, 1))
        assert plan.r_star == Fraction(10, 7)
        assert plan.k_star == 6
        assert plan.t_star == Fraction(31, 21)
        assert plan.unique_minimizer

    @staticmethod
    def test_expensive_shuffle_uses_one_helper():
        """Test a large c_s puts r* above Q-1 and K* at Q+1."""
        plan = plan_parallel(JobSpec(3, 1, 1, 1000))
        assert 2 < plan.r_star < 3
        assert plan.k_star == 4

    @staticmethod
    def test_map_and_shuffle_balance():
        """Test the optimum sits where Map and Shuffle times cross."""
        rng = random.Random(31)
        for _ in range(CASES):
            spec = _random_spec(rng)
            plan = plan_parallel(spec)
            assert 0 < plan.r_star < spec.q
            assert plan.t_map_pred == plan.t_shuffle_pred
            env = conv_envelope(spec.q)
            probe = Fraction(rng.randint(0, 1000), 1000) * spec.q
            assert plan.t_star - spec.c_r <= parallel_objective(spec, env, probe)

    @staticmethod
    def test_server_count_formula():
        """Test K* follows the two-regime formula."""
        rng = random.Random(32)
        for _ in range(CASES):
            spec = _random_spec(rng)
            plan = plan_parallel(spec)
            q, r = spec.q, plan.r_star
            if r <= q - 1:
                assert plan.k_star == q + math.ceil(q / r)
            else:
                assert plan.k_star == q + math.ceil(q * (q - r) / r)


class TestUncodedPlan:
    """Unit tests for the uncoded baselines and the coding gain."""

    @staticmethod
    def test_sequential_baseline():
        """Test T = min{c_m, c_s} + c_r."""
        plan = plan_uncoded(JobSpec(3, 1, 1, 2, 1), SEQUENTIAL)
        assert not plan.coded
        assert plan.t_star == 2
        assert plan.k_star == 3

    @staticmethod
    def test_sequential_baseline_without_map_work():
        """Test an expensive Map leaves the reducers idle and K* absent."""
        plan = plan_uncoded(JobSpec(3, 1, 5, 2), SEQUENTIAL)
        assert plan.r_star == 0
        assert plan.k_star is None
        assert plan.t_star == 2

    @staticmethod
    def test_parallel_baseline():
        """Test r = Q c_s / (c_m + c_s) and T = c_m c_s / (c_m + c_s) + c_r."""
        plan = plan_uncoded(JobSpec(3, 1, 1, 2, 1), PARALLEL)
        assert plan.r_star == 2
        assert plan.t_star == Fraction(5, 3)
        assert plan.k_star == 3

    @staticmethod
    def test_unknown_mode_raises():
        """Test an unknown mode is rejected."""
        with pytest.raises(ValueError, match="Unknown mode"):
            plan_for(JobSpec(1, 1, 1, 1), "interleaved")
        with pytest.raises(ValueError, match="Unknown mode"):
            plan_uncoded(JobSpec(1, 1, 1, 1), "interleaved")

    @staticmethod
    def test_coded_never_loses():
        """Test coded times are at most the uncoded ones in both modes."""
        rng = random.Random(41)
        for _ in range(CASES):
            spec = _random_spec(rng)
            for mode in allocator.MODES:
                assert plan_for(spec, mode).t_star <= plan_uncoded(spec, mode).t_star
                assert compare_coded_uncoded(spec, mode) >= 1

    @staticmethod
    def test_gain_grows_with_q():
        """Test the coded time at Q=100 is below a quarter of the uncoded one."""
        spec = JobSpec(100, 1, 1, 1)
        assert compare_coded_uncoded(spec, SEQUENTIAL) > 4

    @staticmethod
    @pytest.mark.parametrize("mode", allocator.MODES)
    def test_coded_map_shuffle_never_exceeds_uncoded_up_to_q_200(mode):
        """Test T* - c_r coded <= uncoded for c_m = c_s and every Q <= 200."""
        for q in range(1, 201):
            spec = JobSpec(q, 1, 1, 1, 1)
            coded = plan_for(spec, mode).t_star - spec.c_r
            uncoded = plan_uncoded(spec, mode).t_star - spec.c_r
            assert coded <= uncoded, q
