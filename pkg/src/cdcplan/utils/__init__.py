"""Utility subpackage for cdcplan.

Contains helper modules for logging configuration, rational parsing,
JSON file I/O and terminal rendering used across the CLI.
"""

from .file_handler import export_json, read_json
from .logger import setup_logging
from .parsing import fraction_from_json, fraction_to_json, parse_rational

__all__ = [
    "setup_logging",
    "read_json",
    "export_json",
    "parse_rational",
    "fraction_to_json",
    "fraction_from_json",
]
