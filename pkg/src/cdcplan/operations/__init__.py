# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Planning, scheme generation, execution and bounds.

This package provides modules for the optimal allocation, the Map and
Shuffle schemes realising it, a deterministic simulator and the converse
bounds they are checked against.
"""

from .allocator import compare_coded_uncoded, plan_for
from .bounds import brute_force_search, time_lower_bounds
from .placement import build_parallel, build_scheme, build_sequential
from .shuffle import build_coded_plan, build_uncoded_plan, decode, encode
from .simulator import run

__all__ = [
    "plan_for",
    "compare_coded_uncoded",
    "build_scheme",
    "build_sequential",
    "build_parallel",
    "build_coded_plan",
    "build_uncoded_plan",
    "encode",
    "decode",
    "run",
    "time_lower_bounds",
    "brute_force_search",
]
