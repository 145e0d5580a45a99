# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Closed-form optimal resource allocation.

Computes the repetition factor r*, the server count K* and the execution
time T* for sequential and parallel implementations, coded and uncoded.
All decisions are exact; the ``r_star_approx`` fields are float diagnostics.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from cdcplan.core import JobSpec
from cdcplan.utils.parsing import fraction_to_json

log = logging.getLogger(__name__)

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
MODES = (SEQUENTIAL, PARALLEL)


def shuffle_load(q: int, r: int) -> Fraction:
    """Return (Q - r) / (Q (r + 1)), the coded load at integer repetition r."""
    return Fraction(q - r, q * (r + 1))


def _ceil(value: Fraction) -> int:
    return -((-value.numerator) // value.denominator)


@dataclass(frozen=True)
class AllocationPlan:
    """Optimal design parameters and predicted phase times.

    ``k_star`` is None when the optimum needs infinitely many servers.
    """

    mode: str
    coded: bool
    r_star: Fraction
    k_star: int | None
    t_star: Fraction
    t_map_pred: Fraction
    t_shuffle_pred: Fraction
    t_reduce_pred: Fraction
    r_star_approx: float
    minimizers: tuple[Fraction, ...] = field(default=())

    @property
    def finite_k_achievable(self) -> bool:
        """Whether T* is attained with finitely many servers."""
        return self.k_star is not None

    @property
    def unique_minimizer(self) -> bool:
        """Whether the objective has a single minimizer."""
        return len(self.minimizers) <= 1

    def to_dict(self) -> dict:
        """Serialize to the JSON model."""
        return {
            "mode": self.mode,
            "coded": self.coded,
            "r_star": fraction_to_json(self.r_star),
            "k_star": self.k_star,
            "finite_k_achievable": self.finite_k_achievable,
            "t_star": fraction_to_json(self.t_star),
            "t_map_pred": fraction_to_json(self.t_map_pred),
            "t_shuffle_pred": fraction_to_json(self.t_shuffle_pred),
            "t_reduce_pred": fraction_to_json(self.t_reduce_pred),
            "r_star_approx": self.r_star_approx,
            "minimizers": [fraction_to_json(r) for r in self.minimizers],
            "unique_minimizer": self.unique_minimizer,
        }


@dataclass(frozen=True)
class EnvelopeFn:
    """Lower convex envelope of the integer load points, piecewise linear."""

    q: int
    breakpoints: tuple[tuple[int, Fraction], ...]

    def segments(self):
        """Yield consecutive breakpoint pairs ``((r0, v0), (r1, v1))``."""
        yield from zip(self.breakpoints, self.breakpoints[1:], strict=False)


def seq_objective(spec: JobSpec, r: int) -> Fraction:
    """Return c_m r / Q + c_s (Q - r) / (Q (r + 1)) exactly.

    Raises:
        ValueError: If ``r`` is not an integer in 0..Q.

    """
    if r != int(r) or not 0 <= r <= spec.q:
        raise ValueError(f"r must be an integer in [0, {spec.q}], got {r}")
    r = int(r)
    return spec.c_m * Fraction(r, spec.q) + spec.c_s * shuffle_load(spec.q, r)


def plan_sequential(spec: JobSpec) -> AllocationPlan:
    """Compute the optimal sequential coded allocation.

    r* is the largest minimizer of `seq_objective` over r in 0..Q. K* is
    Q + ceil(Q / r*) for 0 < r* < Q, Q for r* = Q, and absent for r* = 0.

    Args:
        spec (JobSpec): The job.

    Returns:
        AllocationPlan: The sequential coded plan.

    """
    best_value = None
    minimizers: list[int] = []
    for r in range(spec.q + 1):
        value = seq_objective(spec, r)
        if best_value is None or value < best_value:
            best_value, minimizers = value, [r]
        elif value == best_value:
            minimizers.append(r)
    r_star = minimizers[-1]

    if r_star == 0:
        k_star = None
    elif r_star == spec.q:
        k_star = spec.q
    else:
        k_star = spec.q + _ceil(Fraction(spec.q, r_star))

    t_map = spec.c_m * Fraction(r_star, spec.q)
    t_shuffle = spec.c_s * shuffle_load(spec.q, r_star)
    approx = math.sqrt((spec.q + 1) * spec.c_s / spec.c_m) - 1
    plan = AllocationPlan(
        mode=SEQUENTIAL,
        coded=True,
        r_star=Fraction(r_star),
        k_star=k_star,
        t_star=t_map + t_shuffle + spec.c_r,
        t_map_pred=t_map,
        t_shuffle_pred=t_shuffle,
        t_reduce_pred=spec.c_r,
        r_star_approx=min(max(approx, 0.0), float(spec.q)),
        minimizers=tuple(Fraction(r) for r in minimizers),
    )
    log.debug(
        "[cyan]Sequential plan:[/cyan] r*=%s K*=%s T*=%s", r_star, k_star, plan.t_star
    )
    return plan


def conv_envelope(q: int) -> EnvelopeFn:
    """Lower convex envelope of {(r, (Q - r) / (Q (r + 1))) : r in 0..Q}.

    Computed as a lower hull scan over the points ordered by r.

    Raises:
        ValueError: If ``q`` is not positive.

    """
    if q < 1:
        raise ValueError(f"Q must be positive, got {q}")

    hull: list[tuple[int, Fraction]] = []
    for point in ((r, shuffle_load(q, r)) for r in range(q + 1)):
        while len(hull) > 1 and _cross(hull[-2], hull[-1], point) <= 0:
            hull.pop()
        hull.append(point)
    return EnvelopeFn(q=q, breakpoints=tuple(hull))


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def envelope_eval(env: EnvelopeFn, r: Fraction | int) -> Fraction:
    """Evaluate the envelope at a rational point by exact interpolation.

    Raises:
        ValueError: If ``r`` lies outside [0, Q].

    """
    r = Fraction(r)
    if not 0 <= r <= env.q:
        raise ValueError(f"r must lie in [0, {env.q}], got {r}")
    for (r0, v0), (r1, v1) in env.segments():
        if r0 <= r <= r1:
            return v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    return env.breakpoints[-1][1]


def parallel_objective(spec: JobSpec, env: EnvelopeFn, r: Fraction) -> Fraction:
    """Return max{c_m r / Q, c_s Conv(r)} at a rational r."""
    return max(spec.c_m * r / spec.q, spec.c_s * envelope_eval(env, r))


def plan_parallel(spec: JobSpec) -> AllocationPlan:
    """Compute the optimal parallel coded allocation.

    On every envelope segment the Map term is increasing and the Shuffle
    term linear, so the minimum of their maximum sits either where the two
    lines cross or at a segment end. All candidates are solved exactly and
    the smallest objective wins.

    Args:
        spec (JobSpec): The job.

    Returns:
        AllocationPlan: The parallel coded plan.

    """
    env = conv_envelope(spec.q)
    candidates: set[Fraction] = {Fraction(r) for r, _ in env.breakpoints}
    map_slope = spec.c_m / spec.q
    for (r0, v0), (r1, v1) in env.segments():
        slope = spec.c_s * (v1 - v0) / (r1 - r0)
        intercept = spec.c_s * v0 - slope * r0
        if map_slope != slope:
            crossing = intercept / (map_slope - slope)
            if r0 <= crossing <= r1:
                candidates.add(crossing)

    scored = sorted((parallel_objective(spec, env, r), r) for r in candidates)
    best_value = scored[0][0]
    minimizers = tuple(r for value, r in scored if value == best_value)
    if len(minimizers) > 1:
        log.warning(
            "[yellow]Parallel objective has %d minimizers: %s[/yellow]",
            len(minimizers),
            ", ".join(str(r) for r in minimizers),
        )
    r_star = minimizers[0]

    if r_star <= spec.q - 1:
        k_star = spec.q + _ceil(spec.q / r_star)
    else:
        k_star = spec.q + _ceil(spec.q * (spec.q - r_star) / r_star)

    ratio = spec.c_s / spec.c_m
    half = (ratio + 1) / 2
    approx = math.sqrt(spec.q * ratio + half * half) - half
    t_map = spec.c_m * r_star / spec.q
    t_shuffle = spec.c_s * envelope_eval(env, r_star)
    plan = AllocationPlan(
        mode=PARALLEL,
        coded=True,
        r_star=r_star,
        k_star=k_star,
        t_star=max(t_map, t_shuffle) + spec.c_r,
        t_map_pred=t_map,
        t_shuffle_pred=t_shuffle,
        t_reduce_pred=spec.c_r,
        r_star_approx=min(max(approx, 0.0), float(spec.q)),
        minimizers=minimizers,
    )
    log.debug(
        "[cyan]Parallel plan:[/cyan] r*=%s K*=%s T*=%s", r_star, k_star, plan.t_star
    )
    return plan


def plan_uncoded(spec: JobSpec, mode: str) -> AllocationPlan:
    """Compute the best allocation when the Shuffle phase is uncoded.

    Sequentially the optimum is either full replication (r = Q) or no Map
    work on the reducers (r = 0), giving min{c_m, c_s} + c_r. In parallel the
    Map and Shuffle times balance at r = Q c_s / (c_m + c_s).

    Args:
        spec (JobSpec): The job.
        mode (str): ``"sequential"`` or ``"parallel"``.

    Raises:
        ValueError: If ``mode`` is unknown.

    Returns:
        AllocationPlan: The uncoded baseline plan.

    """
    if mode == SEQUENTIAL:
        replicate = spec.c_m <= spec.c_s
        r_star = Fraction(spec.q if replicate else 0)
        k_star = spec.q if replicate else None
        approx = float(r_star)
    elif mode == PARALLEL:
        r_star = spec.q * spec.c_s / (spec.c_m + spec.c_s)
        k_star = max(spec.q, _ceil(spec.q / r_star))
        approx = float(r_star)
    else:
        raise ValueError(f"Unknown mode {mode!r}; expected one of {MODES}")

    t_map = spec.c_m * r_star / spec.q
    t_shuffle = spec.c_s * (1 - r_star / spec.q)
    if mode == SEQUENTIAL:
        t_star = t_map + t_shuffle + spec.c_r
    else:
        t_star = max(t_map, t_shuffle) + spec.c_r
    return AllocationPlan(
        mode=mode,
        coded=False,
        r_star=r_star,
        k_star=k_star,
        t_star=t_star,
        t_map_pred=t_map,
        t_shuffle_pred=t_shuffle,
        t_reduce_pred=spec.c_r,
        r_star_approx=approx,
        minimizers=(r_star,),
    )


def plan_for(spec: JobSpec, mode: str, coded: bool = True) -> AllocationPlan:
    """Dispatch to the coded planner for ``mode`` or to the uncoded baseline.

    Raises:
        ValueError: If ``mode`` is unknown.

    """
    if not coded:
        return plan_uncoded(spec, mode)
    if mode == SEQUENTIAL:
        return plan_sequential(spec)
    if mode == PARALLEL:
        return plan_parallel(spec)
    raise ValueError(f"Unknown mode {mode!r}; expected one of {MODES}")


def compare_coded_uncoded(spec: JobSpec, mode: str) -> Fraction:
    """Return the coding gain on Map plus Shuffle time (uncoded over coded).

    The Reduce term is common to both designs and is left out.
    """
    coded = plan_for(spec, mode, coded=True)
    uncoded = plan_for(spec, mode, coded=False)
    return (uncoded.t_star - spec.c_r) / (coded.t_star - spec.c_r)
