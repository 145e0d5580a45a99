# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Unit and property tests for converse bounds and the exhaustive search."""

import random
from fractions import Fraction

import pytest

from cdcplan.core import JobSpec, Placement, validate_placement
from cdcplan.operations.allocator import (
    PARALLEL,
    SEQUENTIAL,
    plan_parallel,
    plan_sequential,
)
from cdcplan.operations.bounds import (
    SearchBudgetError,
    availability,
    brute_force_search,
    lemma1_bound,
    time_lower_bounds,
)
from cdcplan.operations.placement import build_sequential

CASES = 1000


def _random_placement(rng: random.Random) -> tuple[JobSpec, Placement]:
    """A single-reducer placement with random Map sets."""
    q = rng.randint(1, 4)
    n = rng.randint(1, 5)
    k = q + rng.randint(0, 2)
    masks = [rng.randint(1, (1 << k) - 1) for _ in range(n)]
    map_sets = [
        {f for f, m in enumerate(masks, start=1) if m >> (s - 1) & 1}
        for s in range(1, k + 1)
    ]
    reduce_sets = [set() for _ in range(k)]
    for function, server in enumerate(rng.sample(range(k), q), start=1):
        reduce_sets[server].add(function)
    return JobSpec(q, n, 1, 1), Placement(k, tuple(map_sets), tuple(reduce_sets))


class TestAvailability:
    """Unit tests for the availability counts and the counting bound."""

    @staticmethod
    def test_worked_example_counts():
        """Test every value sits on three nodes and is missed by one reducer."""
        layout = build_sequential(JobSpec(3, 6, 1, 2, 1), 2, 5)
        table = availability(layout.placement, layout.spec, merge_helpers=True)
        assert table.a == {(3, 1): 6, (3, 0): 12}
        assert table.k == 4
        assert lemma1_bound(table) == Fraction(1, 9)

    @staticmethod
    def test_counts_sum_to_all_values():
        """Test the table accounts for every intermediate value."""
        rng = random.Random(61)
        for _ in range(100):
            spec, placement = _random_placement(rng)
            table = availability(placement, spec)
            assert sum(table.a.values()) == spec.q * spec.n

    @staticmethod
    def test_bound_is_invariant_under_relabelling():
        """Test permuting server ids leaves both bounds unchanged."""
        rng = random.Random(62)
        for _ in range(CASES):
            spec, placement = _random_placement(rng)
            order = list(range(placement.k))
            rng.shuffle(order)
            permuted = Placement(
                placement.k,
                tuple(placement.map_sets[i] for i in order),
                tuple(placement.reduce_sets[i] for i in order),
            )
            for merge in (False, True):
                before = lemma1_bound(availability(placement, spec, merge))
                after = lemma1_bound(availability(permuted, spec, merge))
                assert before == after

    @staticmethod
    def test_merging_helpers_only_strengthens():
        """Test the super node never lowers the bound."""
        rng = random.Random(63)
        for _ in range(CASES):
            spec, placement = _random_placement(rng)
            raw = lemma1_bound(availability(placement, spec, merge_helpers=False))
            enhanced = lemma1_bound(availability(placement, spec, merge_helpers=True))
            assert raw <= enhanced


class TestTimeLowerBounds:
    """Unit tests for `time_lower_bounds`."""

    @staticmethod
    def test_worked_example_is_tight():
        """Test the bounds equal the achieved load and time."""
        layout = build_sequential(JobSpec(3, 6, 1, 2, 1), 2, 5)
        report = time_lower_bounds(layout.placement, layout.spec)
        assert report.raw_bound == Fraction(1, 9)
        assert report.enhanced_bound == Fraction(1, 9)
        assert report.time_lower_sequential == Fraction(17, 9)
        assert report.time_lower_parallel == Fraction(5, 3)

    @staticmethod
    @pytest.mark.parametrize("q", [2, 3, 4, 5])
    def test_generated_schemes_meet_the_bound(q):
        """Test the enhanced bound equals the coded load for every r."""
        for r in range(1, q):
            k = q + 2
            spec = JobSpec(q, 1, 1, 1)
            layout = build_sequential(spec, r, k, pad=True)
            report = time_lower_bounds(layout.placement, layout.spec)
            assert report.enhanced_bound == Fraction(q - r, q * (r + 1))
            assert report.raw_bound <= report.enhanced_bound

    @staticmethod
    def test_sequential_bound_is_below_optimum():
        """Test random placements never beat the optimal sequential time."""
        rng = random.Random(64)
        for _ in range(200):
            spec, placement = _random_placement(rng)
            report = time_lower_bounds(placement, spec)
            assert report.time_lower_sequential >= plan_sequential(spec).t_star
            assert report.time_lower_parallel >= plan_parallel(spec).t_star

    @staticmethod
    def test_several_functions_per_server_raise():
        """Test the bound requires one function per server."""
        spec = JobSpec(2, 1, 1, 1)
        placement = Placement(1, ({1},), ({1, 2},))
        with pytest.raises(ValueError, match="reduces 2 functions"):
            time_lower_bounds(placement, spec)

    @staticmethod
    def test_invalid_placement_raises():
        """Test invalid placements are rejected."""
        spec = JobSpec(1, 2, 1, 1)
        with pytest.raises(ValueError, match="file 2 unmapped"):
            time_lower_bounds(Placement(1, ({1},), ({1},)), spec)


class TestBruteForceSearch:
    """Unit tests for the exhaustive search."""

    @staticmethod
    def test_certifies_sequential_optimum():
        """Test Q=2, N=4 with unit costs reaches 7/4 first at K=4."""
        spec = JobSpec(2, 4, 1, 1, 1)
        result = brute_force_search(spec, 4, SEQUENTIAL)
        assert result.minimum == Fraction(7, 4)
        assert result.minimum == plan_sequential(spec).t_star
        assert result.k == 4
        assert result.per_k[2] > Fraction(7, 4)
        assert result.per_k[3] > Fraction(7, 4)
        assert result.evaluated == 3**4 + 7**4 + 15**4
        assert validate_placement(spec, result.witness).ok

    @staticmethod
    def test_single_function_single_file():
        """Test the minimum is c_m + c_r when one server does everything."""
        result = brute_force_search(JobSpec(1, 1, 1, 1, 0), 2, SEQUENTIAL)
        assert result.minimum == 1
        assert result.k == 1

    @staticmethod
    def test_expensive_map_needs_helpers():
        """Test Q=2, N=2, c_m=100, c_s=1 reaches 201/4 first at K=4."""
        result = brute_force_search(JobSpec(2, 2, 100, 1, 0), 4, SEQUENTIAL)
        assert result.minimum == Fraction(201, 4)
        assert result.k == 4
        assert result.per_k[3] == Fraction(403, 8)
        assert result.per_k[2] == Fraction(101, 2)

    @staticmethod
    def test_parallel_minimum_respects_converse():
        """Test no placement beats the parallel optimum."""
        spec = JobSpec(2, 2, 1, 1)
        result = brute_force_search(spec, 3, PARALLEL)
        assert result.mode == PARALLEL
        assert result.minimum >= plan_parallel(spec).t_star

    @staticmethod
    def test_pruning_loses_nothing():
        """Test fixing the reducers gives the same minimum."""
        spec = JobSpec(2, 2, 1, 1)
        pruned = brute_force_search(spec, 3, SEQUENTIAL)
        full = brute_force_search(spec, 3, SEQUENTIAL, prune=False)
        assert pruned.minimum == full.minimum
        assert full.evaluated > pruned.evaluated

    @staticmethod
    def test_workers_give_the_same_result():
        """Test the process pool merges results deterministically."""
        spec = JobSpec(2, 2, 1, 1)
        inline = brute_force_search(spec, 3, SEQUENTIAL)
        pooled = brute_force_search(spec, 3, SEQUENTIAL, workers=2)
        assert pooled.to_dict() == inline.to_dict()

    @staticmethod
    def test_budget_is_enforced():
        """Test the search refuses oversized enumerations."""
        with pytest.raises(SearchBudgetError) as e:
            brute_force_search(JobSpec(2, 4, 1, 1, 1), 4, SEQUENTIAL, budget=10)
        assert e.value.required == 3**4 + 7**4 + 15**4
        assert e.value.budget == 10

    @staticmethod
    def test_k_max_below_q_raises():
        """Test at least Q servers are needed."""
        with pytest.raises(ValueError, match="K_max must be at least"):
            brute_force_search(JobSpec(3, 1, 1, 1), 2, SEQUENTIAL)
