# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Converse bounds on communication load and execution time.

The counting bound charges every intermediate value available at s nodes
and needed by d others d / (s + d - 1). Merging all non-reducing servers
into one super node can only raise it. Tiny instances are certified by
enumerating every Map assignment.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations, product
from multiprocessing import Pool
from typing import NamedTuple

from cdcplan.core import JobSpec, Placement, validate_placement
from cdcplan.operations.allocator import PARALLEL, conv_envelope, envelope_eval
from cdcplan.utils.parsing import fraction_to_json

log = logging.getLogger(__name__)

DEFAULT_SEARCH_BUDGET = 5_000_000


class SearchBudgetError(RuntimeError):
    """The exhaustive search would enumerate more placements than allowed."""

    def __init__(self, budget: int, required: int):
        """Record the configured cap and the enumeration size."""
        super().__init__(
            f"search needs {required:,} evaluations, budget is {budget:,}"
        )
        self.budget = budget
        self.required = required


@dataclass(frozen=True)
class AvailabilityTable:
    """Counts a[s, d] of values available at s nodes and missing at d reducers."""

    q: int
    n: int
    k: int
    a: dict[tuple[int, int], int]
    merged: bool = False

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "q": self.q,
            "n": self.n,
            "k": self.k,
            "merged": self.merged,
            "a": {f"s={s},d={d}": c for (s, d), c in sorted(self.a.items())},
        }


@dataclass(frozen=True)
class BoundReport:
    """Lower bounds for a placement."""

    raw_bound: Fraction
    enhanced_bound: Fraction
    time_lower_sequential: Fraction
    time_lower_parallel: Fraction

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "raw_bound": fraction_to_json(self.raw_bound),
            "enhanced_bound": fraction_to_json(self.enhanced_bound),
            "time_lower_sequential": fraction_to_json(self.time_lower_sequential),
            "time_lower_parallel": fraction_to_json(self.time_lower_parallel),
        }


def availability(
    placement: Placement, spec: JobSpec, merge_helpers: bool = False
) -> AvailabilityTable:
    """Count intermediate values by availability s and demand d.

    With ``merge_helpers`` the servers reducing nothing count as a single
    node that maps the union of their files.

    Args:
        placement (Placement): A valid placement.
        spec (JobSpec): The job.
        merge_helpers (bool): Merge non-reducing servers into a super node.

    Returns:
        AvailabilityTable: Counts summing to Q N.

    """
    merged = set(placement.helpers) if merge_helpers else set()
    reducers = {
        q: [k for k in placement.servers if q in placement.reduces(k)]
        for q in range(1, spec.q + 1)
    }
    counts: Counter[tuple[int, int]] = Counter()
    for n in range(1, spec.n + 1):
        mappers = placement.mappers_of(n)
        s = sum(1 for m in mappers if m not in merged)
        s += int(any(m in merged for m in mappers))
        for q in range(1, spec.q + 1):
            d = sum(1 for k in reducers[q] if n not in placement.maps(k))
            counts[(s, d)] += 1

    nodes = placement.k - len(merged) + int(bool(merged))
    return AvailabilityTable(spec.q, spec.n, nodes, dict(counts), merge_helpers)


def lemma1_bound(table: AvailabilityTable) -> Fraction:
    """Return (1 / QN) sum over s, d >= 1 of a[s, d] d / (s + d - 1)."""
    total = sum(
        (Fraction(count * d, s + d - 1) for (s, d), count in table.a.items() if d),
        Fraction(0),
    )
    return total / (table.q * table.n)


def _single_reducer_check(placement: Placement) -> None:
    for k in placement.servers:
        if len(placement.reduces(k)) > 1:
            raise ValueError(
                f"server {k} reduces {len(placement.reduces(k))} functions; the "
                "bound assumes one per server. Split it into single-function "
                "copies that map the same files first."
            )


def time_lower_bounds(placement: Placement, spec: JobSpec) -> BoundReport:
    """Lower-bound the communication load and execution times of a placement.

    The sequential bound decomposes by file: a file mapped by j solvers
    costs c_m j + c_s (Q - j) / j, or c_m j + c_s (Q - j) / (j + 1) when the
    super node also maps it. The parallel bound applies the envelope to the
    average solver repetition.

    Args:
        placement (Placement): A valid placement.
        spec (JobSpec): The job.

    Raises:
        ValueError: If the placement is invalid or a server reduces more than
            one function.

    Returns:
        BoundReport: Raw and enhanced load bounds and time bounds.

    """
    report = validate_placement(spec, placement)
    if not report.ok:
        raise ValueError(f"Invalid placement: {'; '.join(report.violations)}")
    _single_reducer_check(placement)

    raw = lemma1_bound(availability(placement, spec, merge_helpers=False))
    enhanced = lemma1_bound(availability(placement, spec, merge_helpers=True))

    solvers = set(placement.solvers)
    helpers = set(placement.helpers)
    profile: Counter[tuple[int, int]] = Counter()
    for n in range(1, spec.n + 1):
        mappers = placement.mappers_of(n)
        j = sum(1 for m in mappers if m in solvers)
        profile[(j, int(any(m in helpers for m in mappers)))] += 1

    q = spec.q
    per_file = Fraction(0)
    for (j, at_super), files in profile.items():
        per_file += files * (spec.c_m * j + spec.c_s * Fraction(q - j, j + at_super))
    sequential = per_file / (q * spec.n) + spec.c_r

    mean_load = Fraction(sum(j * c for (j, _), c in profile.items()), q * spec.n)
    conv = envelope_eval(conv_envelope(q), q * mean_load)
    parallel = max(spec.c_m * mean_load, spec.c_s * conv) + spec.c_r

    log.debug("Bounds: raw=%s enhanced=%s", raw, enhanced)
    return BoundReport(raw, enhanced, sequential, parallel)


@dataclass(frozen=True)
class SearchResult:
    """Exhaustive minimum of the bounded execution time."""

    mode: str
    minimum: Fraction
    k: int
    witness: Placement
    per_k: dict[int, Fraction]
    evaluated: int

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "mode": self.mode,
            "minimum": fraction_to_json(self.minimum),
            "k": self.k,
            "witness": self.witness.to_dict(),
            "per_k": {str(k): fraction_to_json(v) for k, v in self.per_k.items()},
            "evaluated": self.evaluated,
        }


class _Unit(NamedTuple):
    """One enumeration chunk: a server count, reducers and the first file's mask."""

    q: int
    n: int
    k: int
    reducers: tuple[int, ...]
    first_mask: int
    map_weight: int
    shuffle_weight: int
    parallel: bool


def _search_unit(unit: _Unit) -> tuple[int, tuple[int, ...], int]:
    """Return the best integer score, its masks and the evaluation count."""
    q, k = unit.q, unit.k
    scale = math.lcm(*range(1, k + 1))
    reducer_bits = [1 << (s - 1) for s in unit.reducers]
    solver_mask = sum(reducer_bits)
    helper_mask = ((1 << k) - 1) & ~solver_mask

    # per-mask scaled contribution of a file's Q values to the counting bound
    contribution = [0] * (1 << k)
    for mask in range(1, 1 << k):
        s = (mask & solver_mask).bit_count() + int(bool(mask & helper_mask))
        missing = sum(1 for bit in reducer_bits if not mask & bit)
        contribution[mask] = missing * scale // s
    bits = [[(mask >> s) & 1 for s in range(k)] for mask in range(1 << k)]

    best_score, best_masks, evaluated = None, (), 0
    for rest in product(range(1, 1 << k), repeat=unit.n - 1):
        masks = (unit.first_mask, *rest)
        peak = max(map(sum, zip(*(bits[m] for m in masks), strict=True)))
        shuffle = sum(contribution[m] for m in masks)
        map_term = unit.map_weight * peak
        shuffle_term = unit.shuffle_weight * shuffle
        if unit.parallel:
            score = max(map_term, shuffle_term)
        else:
            score = map_term + shuffle_term
        evaluated += 1
        if best_score is None or score < best_score:
            best_score, best_masks = score, masks
    return best_score, best_masks, evaluated


def _required(spec: JobSpec, k_max: int, prune: bool) -> int:
    total = 0
    for k in range(spec.q, k_max + 1):
        assignments = 1 if prune else math.perm(k, spec.q)
        total += ((1 << k) - 1) ** spec.n * assignments
    return total


def brute_force_search(
    spec: JobSpec,
    k_max: int,
    mode: str,
    budget: int = DEFAULT_SEARCH_BUDGET,
    workers: int = 1,
    prune: bool = True,
) -> SearchResult:
    """Minimise c_m p + c_s L_bound + c_r over every placement with K <= k_max.

    Every file is assigned a nonempty server subset and every function a
    distinct reducer; L_bound is the super-node counting bound. With
    ``prune`` the reducer of function j is fixed to server j, which loses
    nothing since the objective is invariant under relabelling servers.
    The parallel objective uses max{c_m p, c_s L_bound} instead of the sum.

    Args:
        spec (JobSpec): The job; keep Q, N and k_max tiny.
        k_max (int): Largest server count to enumerate.
        mode (str): ``"sequential"`` or ``"parallel"``.
        budget (int): Cap on the number of evaluated placements.
        workers (int): Worker processes; 1 runs inline.
        prune (bool): Fix the Reduce assignment by symmetry.

    Raises:
        ValueError: If ``k_max`` is below Q.
        SearchBudgetError: If the enumeration exceeds ``budget``.

    Returns:
        SearchResult: The exact minimum, a witness and per-K minima.

    """
    if k_max < spec.q:
        raise ValueError(f"K_max must be at least Q={spec.q}, got {k_max}")
    required = _required(spec, k_max, prune)
    if required > budget:
        raise SearchBudgetError(budget, required)

    denominator = math.lcm(spec.c_m.denominator, spec.c_s.denominator)
    units = []
    for k in range(spec.q, k_max + 1):
        scale = math.lcm(*range(1, k + 1))
        map_weight = int(spec.c_m * denominator) * scale * spec.q
        shuffle_weight = int(spec.c_s * denominator)
        if prune:
            assignments = [tuple(range(1, spec.q + 1))]
        else:
            assignments = list(permutations(range(1, k + 1), spec.q))
        units.extend(
            _Unit(
                spec.q,
                spec.n,
                k,
                reducers,
                first,
                map_weight,
                shuffle_weight,
                mode == PARALLEL,
            )
            for reducers in assignments
            for first in range(1, 1 << k)
        )
    log.info(
        "[cyan]Searching %s placements in %d chunks[/cyan]", f"{required:,}", len(units)
    )

    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_search_unit, units)
    else:
        results = [_search_unit(unit) for unit in units]

    best = None
    per_k: dict[int, Fraction] = {}
    evaluated = 0
    for unit, (score, masks, count) in zip(units, results, strict=True):
        evaluated += count
        scale = math.lcm(*range(1, unit.k + 1))
        value = Fraction(score, denominator * scale * spec.q * spec.n) + spec.c_r
        if unit.k not in per_k or value < per_k[unit.k]:
            per_k[unit.k] = value
        if best is None or value < best[0]:
            best = (value, unit, masks)

    value, unit, masks = best
    map_sets = [
        frozenset(n for n, m in enumerate(masks, start=1) if m >> (s - 1) & 1)
        for s in range(1, unit.k + 1)
    ]
    reduce_sets = [frozenset() for _ in range(unit.k)]
    for function, server in enumerate(unit.reducers, start=1):
        reduce_sets[server - 1] = frozenset({function})
    witness = Placement(unit.k, tuple(map_sets), tuple(reduce_sets))
    log.info("[green]✅ Search minimum %s at K=%d[/green]", value, unit.k)
    return SearchResult(mode, value, unit.k, witness, per_k, evaluated)
