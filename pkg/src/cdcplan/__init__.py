# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""cdcplan package.

A command-line planner for coded distributed computing: it picks the
repetition factor and server count that minimise MapReduce execution time,
generates the matching Map placement and coded Shuffle, executes it on
synthetic data and checks it against converse bounds.

This package follows:
- PEP 257 (docstring conventions)
- PEP 420 (namespace compatibility)
- PEP 440 (versioning)
"""
