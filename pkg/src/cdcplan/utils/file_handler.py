"""Utilities for reading and writing scheme and result files.

Schemes, bound reports and run results are exchanged as JSON documents with
sorted keys, so a file written twice from the same inputs is byte-identical.
"""

import json
import logging
import os

log = logging.getLogger(__name__)


def dumps(data: dict) -> str:
    """Render a JSON model deterministically."""
    return json.dumps(data, sort_keys=True, indent=2)


def export_json(data: dict, filename: str) -> bool:
    """Write a JSON model to ``filename``.

    Args:
        data (dict): The model, as produced by a ``to_dict`` method.
        filename (str): Output path.

    Returns:
        bool: True if the export succeeded, False otherwise.

    """
    try:
        with open(filename, "w", encoding="utf-8") as handle:
            handle.write(dumps(data) + "\n")
    except (OSError, TypeError) as e:
        log.error(f"[bold red]💥 Error writing JSON file:[/bold red] {e}")
        return False

    log.info(f"[green]✅ Written to [bold]{filename}[/bold][/green]")
    return True


def read_json(filename: str) -> dict | None:
    """Read a JSON model from ``filename``.

    Returns:
        dict | None: The decoded object if it is a JSON object, None otherwise.

    """
    if not os.path.exists(filename):
        log.error(f"[red]❌ File not found:[/red] {filename}")
        return None

    try:
        log.info(f"[cyan]📂 Reading JSON file:[/cyan] {filename}")
        with open(filename, encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        log.error(f"[bold red]💥 Error reading JSON file:[/bold red] {e}")
        return None

    if not isinstance(data, dict):
        log.error("[red]❌ Expected a JSON object at the top level.[/red]")
        return None
    return data
