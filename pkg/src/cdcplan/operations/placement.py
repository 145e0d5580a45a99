# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Map and Reduce task assignment of the optimal schemes.

Servers 1..Q are solvers (solver k reduces function k); servers Q+1..K are
helpers. Files are split into equal batches B_{i,A}, one per helper i and
solver subset A of size r, and a batch is mapped by its helper and by every
solver in A. The parallel scheme splits the files into two strata with
repetition factors r_- and r_+ and weights 1 - alpha and alpha.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from cdcplan.core import BatchLabel, JobSpec, Placement
from cdcplan.operations.allocator import PARALLEL, SEQUENTIAL, AllocationPlan
from cdcplan.utils.parsing import fraction_from_json, fraction_to_json

log = logging.getLogger(__name__)

DEFAULT_HELPER_EPSILON = Fraction(1, 10)


class DivisibilityError(ValueError):
    """N is incompatible with the batch structure of the requested scheme."""

    def __init__(self, message: str, compatible_n: int):
        """Record the least compatible file count alongside the message."""
        super().__init__(message)
        self.compatible_n = compatible_n


@dataclass(frozen=True)
class Stratum:
    """A slice of the dataset laid out with a single repetition factor."""

    name: str
    repetition: int
    weight: Fraction
    file_count: int

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "name": self.name,
            "repetition": self.repetition,
            "weight": fraction_to_json(self.weight),
            "file_count": self.file_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Stratum":
        """Deserialize from the JSON model."""
        return cls(
            name=data["name"],
            repetition=int(data["repetition"]),
            weight=fraction_from_json(data["weight"]),
            file_count=int(data["file_count"]),
        )


@dataclass(frozen=True)
class SchemeLayout:
    """A generated placement together with its batch and strata structure."""

    spec: JobSpec
    mode: str
    placement: Placement
    r_effective: Fraction
    alpha: Fraction
    strata: tuple[Stratum, ...]
    padded_from: int | None = None

    @property
    def labels(self) -> dict[BatchLabel, tuple[int, ...]]:
        """Batch label to ordered file ids."""
        return self.placement.batch_index or {}

    def server_load(self, server: int) -> Fraction:
        """Fraction of the files mapped by ``server``."""
        return Fraction(len(self.placement.maps(server)), self.spec.n)

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "spec": self.spec.to_dict(),
            "mode": self.mode,
            "placement": self.placement.to_dict(),
            "r_effective": fraction_to_json(self.r_effective),
            "alpha": fraction_to_json(self.alpha),
            "strata": [s.to_dict() for s in self.strata],
            "padded_from": self.padded_from,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SchemeLayout":
        """Deserialize from the JSON model."""
        return cls(
            spec=JobSpec.from_dict(data["spec"]),
            mode=data["mode"],
            placement=Placement.from_dict(data["placement"]),
            r_effective=fraction_from_json(data["r_effective"]),
            alpha=fraction_from_json(data["alpha"]),
            strata=tuple(Stratum.from_dict(s) for s in data["strata"]),
            padded_from=data.get("padded_from"),
        )


def colex_subsets(q: int, size: int) -> list[tuple[int, ...]]:
    """Subsets of {1..q} of the given size in colexicographic order."""
    return sorted(combinations(range(1, q + 1), size), key=lambda s: s[::-1])


def _batch_count(q: int, k: int, repetition: int) -> int:
    """Batches in a stratum with helpers; 1 for a solver-only stratum."""
    if repetition == q:
        return 1
    return (k - q) * math.comb(q, repetition)


def _period(requirements: list[tuple[Fraction, int]]) -> int:
    """Least N such that weight * N is a multiple of modulus for every pair.

    Compatible file counts are exactly the positive multiples of the result.
    """
    base = math.lcm(*(w.denominator for w, _ in requirements))
    step = 1
    for weight, modulus in requirements:
        if weight == 0:
            continue
        files_per_step = weight.numerator * (base // weight.denominator)
        step = math.lcm(step, modulus // math.gcd(files_per_step, modulus))
    return base * step


def _strata_plan(q: int, r: Fraction, mode: str) -> list[tuple[str, int, Fraction]]:
    """Return (name, repetition, weight) for each stratum of the scheme."""
    if mode == SEQUENTIAL:
        name = "solver_only" if r == q else "none"
        return [(name, int(r), Fraction(1))]

    r_plus = math.ceil(r)
    r_minus = r_plus - 1
    alpha = r - r_minus
    head = "solver_only" if r > q - 1 else "plus"
    return [(head, r_plus, alpha), ("minus", r_minus, 1 - alpha)]


def compatible_n(q: int, r: Fraction | int, k: int, mode: str, n: int = 1) -> int:
    """Return the least N' >= n compatible with the scheme's batch sizes."""
    requirements = [
        (weight, _batch_count(q, k, repetition))
        for _, repetition, weight in _strata_plan(q, Fraction(r), mode)
    ]
    period = _period(requirements)
    return max(1, -(-n // period)) * period


def _resolve_n(spec: JobSpec, r: Fraction, k: int, mode: str, pad: bool) -> JobSpec:
    """Return ``spec`` with N padded if allowed; fail on incompatible N."""
    needed = compatible_n(spec.q, r, k, mode, spec.n)
    if needed == spec.n:
        return spec
    if not pad:
        raise DivisibilityError(
            f"N={spec.n} is incompatible with the {mode} scheme for r={r}, "
            f"K={k}; the smallest compatible N is {needed}",
            compatible_n=needed,
        )
    log.info("[yellow]Padding N from %d to %d[/yellow]", spec.n, needed)
    return spec.with_n(needed)


def _layout(
    spec: JobSpec,
    k: int,
    mode: str,
    r: Fraction,
    strata_plan: list[tuple[str, int, Fraction]],
    padded_from: int | None,
) -> SchemeLayout:
    """Assign consecutive file blocks to batch labels, stratum by stratum."""
    q = spec.q
    helpers = range(q + 1, k + 1)
    batch_index: dict[BatchLabel, tuple[int, ...]] = {}
    strata: list[Stratum] = []
    next_file = 1

    for name, repetition, weight in strata_plan:
        file_count = int(weight * spec.n)
        strata.append(Stratum(name, repetition, weight, file_count))
        if file_count == 0:
            continue

        if repetition == q:
            labels = [BatchLabel(None, tuple(range(1, q + 1)), name)]
        else:
            labels = [
                BatchLabel(i, subset, name)
                for i in helpers
                for subset in colex_subsets(q, repetition)
            ]
        size = file_count // len(labels)
        for label in labels:
            batch_index[label] = tuple(range(next_file, next_file + size))
            next_file += size

    map_sets: list[set[int]] = [set() for _ in range(k)]
    for label, files in batch_index.items():
        for solver in label.solver_set:
            map_sets[solver - 1].update(files)
        if label.helper is not None:
            map_sets[label.helper - 1].update(files)
    reduce_sets = [frozenset({s}) if s <= q else frozenset() for s in range(1, k + 1)]

    placement = Placement(
        k=k,
        map_sets=tuple(frozenset(m) for m in map_sets),
        reduce_sets=tuple(reduce_sets),
        batch_index=batch_index,
    )
    alpha = strata_plan[0][2] if mode == PARALLEL else Fraction(1)
    log.debug(
        "Built %s layout: Q=%d N=%d K=%d r=%s with %d batches",
        mode,
        q,
        spec.n,
        k,
        r,
        len(batch_index),
    )
    return SchemeLayout(
        spec=spec,
        mode=mode,
        placement=placement,
        r_effective=Fraction(r),
        alpha=alpha,
        strata=tuple(strata),
        padded_from=padded_from,
    )


def build_sequential(spec: JobSpec, r: int, k: int, pad: bool = False) -> SchemeLayout:
    """Build the sequential scheme with repetition ``r`` on ``k`` servers.

    For 1 <= r <= Q-1 the files form (K-Q) C(Q, r) equal batches labelled
    (i, A); for r = 0 the helpers partition the files and the solvers map
    nothing; for r = Q every solver maps every file.

    Args:
        spec (JobSpec): The job.
        r (int): Repetition factor, an integer in 0..Q.
        k (int): Number of servers.
        pad (bool): Raise N to the least compatible value instead of failing.

    Raises:
        ValueError: If ``r`` or ``k`` is out of range for the case.
        DivisibilityError: If N does not fit the batches and ``pad`` is off.

    Returns:
        SchemeLayout: The generated layout.

    """
    if r != int(r) or not 0 <= r <= spec.q:
        raise ValueError(f"r must be an integer in [0, {spec.q}], got {r}")
    r = int(r)
    if k < spec.q:
        raise ValueError(f"K must be at least Q={spec.q}, got {k}")
    if r < spec.q and k <= spec.q:
        raise ValueError(f"r={r} < Q needs at least one helper, so K > {spec.q}")

    resolved = _resolve_n(spec, Fraction(r), k, SEQUENTIAL, pad)
    padded_from = spec.n if resolved.n != spec.n else None
    plan = _strata_plan(spec.q, Fraction(r), SEQUENTIAL)
    return _layout(resolved, k, SEQUENTIAL, Fraction(r), plan, padded_from)


def build_parallel(
    spec: JobSpec, r: Fraction, k: int, pad: bool = False
) -> SchemeLayout:
    """Build the parallel scheme by memory sharing between r_- and r_+.

    A fraction alpha = r - r_- of the files is laid out with repetition
    r_+ = ceil(r) and the rest with r_-. When r > Q - 1 the alpha stratum is
    mapped by every solver and by no helper.

    Args:
        spec (JobSpec): The job.
        r (Fraction): Target repetition, 0 < r <= Q.
        k (int): Number of servers.
        pad (bool): Raise N to the least compatible value instead of failing.

    Raises:
        ValueError: If ``r`` or ``k`` is out of range.
        DivisibilityError: If N does not fit the strata and ``pad`` is off.

    Returns:
        SchemeLayout: The generated layout.

    """
    r = Fraction(r)
    if not 0 < r <= spec.q:
        raise ValueError(f"r must lie in (0, {spec.q}], got {r}")
    if k < spec.q:
        raise ValueError(f"K must be at least Q={spec.q}, got {k}")

    plan = _strata_plan(spec.q, r, PARALLEL)
    needs_helpers = any(
        weight > 0 and repetition < spec.q for _, repetition, weight in plan
    )
    if needs_helpers and k <= spec.q:
        raise ValueError(f"r={r} needs at least one helper, so K > {spec.q}")

    resolved = _resolve_n(spec, r, k, PARALLEL, pad)
    padded_from = spec.n if resolved.n != spec.n else None
    return _layout(resolved, k, PARALLEL, r, plan, padded_from)


def build_scheme(
    spec: JobSpec,
    plan: AllocationPlan,
    k: int | None = None,
    pad: bool = False,
    helper_epsilon: Fraction = DEFAULT_HELPER_EPSILON,
) -> SchemeLayout:
    """Build the layout realising a coded allocation plan.

    K defaults to the plan's K*. When K* does not exist (sequential r* = 0)
    the smallest K whose helper load is at most ``helper_epsilon`` is used.

    Raises:
        ValueError: If the plan is uncoded.

    """
    if not plan.coded:
        raise ValueError("Layouts are generated for coded plans only")
    if k is None:
        k = plan.k_star
    if k is None:
        k = spec.q + math.ceil(1 / Fraction(helper_epsilon))
        log.info(
            "[yellow]T* needs unboundedly many servers; using K=%d[/yellow]", k
        )
    if plan.mode == SEQUENTIAL:
        return build_sequential(spec, int(plan.r_star), k, pad=pad)
    return build_parallel(spec, plan.r_star, k, pad=pad)
