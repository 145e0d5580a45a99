"""Terminal rendering of allocation plans.

Plans are drawn as a Rich table on stderr next to the JSON on stdout.
"""

import logging

from rich.console import Console
from rich.errors import ConsoleError, StyleError
from rich.table import Table

from cdcplan.operations.allocator import AllocationPlan

log = logging.getLogger(__name__)


def plan_table(plans: list[AllocationPlan]) -> Table:
    """Build a table with one row per plan."""
    table = Table(title="Optimal allocation")
    table.add_column("mode")
    table.add_column("shuffle")
    table.add_column("r*", justify="right")
    table.add_column("K*", justify="right")
    table.add_column("T*", justify="right")
    table.add_column("T* (approx)", justify="right")
    for plan in plans:
        table.add_row(
            plan.mode,
            "coded" if plan.coded else "uncoded",
            str(plan.r_star),
            "∞" if plan.k_star is None else str(plan.k_star),
            str(plan.t_star),
            f"{float(plan.t_star):.6g}",
        )
    return table


def show_plans(plans: list[AllocationPlan], console: Console | None = None) -> bool:
    """Print the plan table.

    Args:
        plans (list[AllocationPlan]): Plans to render.
        console (Console | None): Target console; defaults to stderr.

    Returns:
        bool: True if the table was printed, False otherwise.

    """
    try:
        (console or Console(stderr=True)).print(plan_table(plans))
        return True
    except (ConsoleError, StyleError, TypeError) as e:
        log.error(f"[bold red]💥 Error rendering the plans:[/bold red] {e}")
        return False
