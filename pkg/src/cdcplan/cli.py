# Copyright (c) 2025 Yannis Arapakis
# Licensed under the MIT License. See LICENSE file for details.
"""Command-line interface for planning and checking coded MapReduce schemes."""

import csv
import io
from fractions import Fraction

import click
from rich.console import Console

from cdcplan.core import JobSpec
from cdcplan.operations.allocator import (
    PARALLEL,
    SEQUENTIAL,
    AllocationPlan,
    compare_coded_uncoded,
    plan_for,
)
from cdcplan.operations.bounds import (
    DEFAULT_SEARCH_BUDGET,
    SearchBudgetError,
    brute_force_search,
    time_lower_bounds,
)
from cdcplan.operations.placement import (
    DEFAULT_HELPER_EPSILON,
    DivisibilityError,
    SchemeLayout,
    build_scheme,
)
from cdcplan.operations.shuffle import (
    ShufflePlan,
    build_coded_plan,
    build_uncoded_plan,
)
from cdcplan.operations.simulator import run
from cdcplan.utils.file_handler import dumps, export_json, read_json
from cdcplan.utils.logger import setup_logging
from cdcplan.utils.parsing import parse_rational
from cdcplan.utils.visualization import show_plans

console = Console(stderr=True)

MODE_NAMES = {"seq": SEQUENTIAL, "par": PARALLEL}
SWEEP_COLUMNS = (
    "q",
    "ratio",
    "r_star",
    "k_star",
    "t_coded",
    "t_uncoded",
    "gain",
    "ratio_exact",
    "r_star_exact",
    "t_coded_exact",
    "t_uncoded_exact",
)


class InfeasibleError(click.ClickException):
    """The request is well-formed but cannot be met."""

    exit_code = 3


class RationalType(click.ParamType):
    """Click parameter accepting ``p/q``, integers and decimals exactly."""

    name = "rational"

    def convert(self, value, param, ctx):
        """Convert the flag value to a `Fraction`."""
        if isinstance(value, Fraction):
            return value
        try:
            return parse_rational(str(value))
        except ValueError as e:
            self.fail(str(e), param, ctx)


RATIONAL = RationalType()


def job_options(required: bool = True):
    """Attach the job flags shared by the planning commands."""
    options = [
        click.option(
            "--q", type=click.IntRange(min=1), required=required, help="Functions Q."
        ),
        click.option(
            "--n", type=click.IntRange(min=1), default=None, help="Input files N."
        ),
        click.option("--cm", type=RATIONAL, required=required, help="Map cost c_m."),
        click.option(
            "--cs", type=RATIONAL, required=required, help="Shuffle cost c_s."
        ),
        click.option(
            "--cr", type=RATIONAL, default=Fraction(0), help="Reduce cost c_r."
        ),
        click.option(
            "--t-bits",
            type=click.IntRange(min=8),
            default=64,
            show_default=True,
            help="Bits per intermediate value, a multiple of 8.",
        ),
    ]

    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


def _job_spec(q, n, cm, cs, cr, t_bits) -> JobSpec:
    """Build the job from flags, reporting invariant violations as usage errors."""
    for flag, value in (("--q", q), ("--cm", cm), ("--cs", cs)):
        if value is None:
            raise click.UsageError(f"Missing option '{flag}'.")
    try:
        return JobSpec(q, n or 1, cm, cs, cr, t_bits)
    except ValueError as e:
        raise click.UsageError(f"Invalid job: {e}") from None


def _modes(mode: str) -> list[str]:
    if mode == "both":
        return [SEQUENTIAL, PARALLEL]
    return [MODE_NAMES[mode]]


def _emit(data: dict) -> None:
    click.echo(dumps(data))


def _build(
    spec: JobSpec,
    mode: str,
    k: int | None,
    pad: bool,
    uncoded: bool,
    helper_epsilon: Fraction,
) -> tuple[AllocationPlan, SchemeLayout, ShufflePlan]:
    """Plan, lay out and shuffle; infeasible requests exit with code 3."""
    plan = plan_for(spec, mode)
    try:
        layout = build_scheme(
            spec, plan, k=k, pad=pad, helper_epsilon=helper_epsilon
        )
    except DivisibilityError as e:
        raise InfeasibleError(f"{e}. Use --pad or --n {e.compatible_n}.") from None
    except ValueError as e:
        raise InfeasibleError(f"Cannot build the scheme: {e}") from None

    shuffle = build_uncoded_plan(layout) if uncoded else build_coded_plan(layout)
    return plan, layout, shuffle


def _load_scheme(path: str) -> tuple[SchemeLayout, ShufflePlan]:
    data = read_json(path)
    if data is None:
        raise click.BadParameter(f"cannot read '{path}'", param_hint="'--scheme'")
    try:
        return SchemeLayout.from_dict(data["layout"]), ShufflePlan.from_dict(
            data["shuffle"]
        )
    except (KeyError, TypeError, ValueError) as e:
        raise click.BadParameter(
            f"'{path}' is not a scheme file: {e}", param_hint="'--scheme'"
        ) from None


@click.group()
@click.option("--verbose", is_flag=True, help="Enable verbose logging.")
@click.pass_context
def cdcplan(ctx, verbose):
    """Plan, generate, simulate and bound coded MapReduce schemes."""
    ctx.ensure_object(dict)
    ctx.obj["log"] = setup_logging(verbose, console)


@cdcplan.command()
@job_options()
@click.option(
    "--mode",
    type=click.Choice(["seq", "par", "both"]),
    default="both",
    show_default=True,
)
@click.option("--uncoded", is_flag=True, help="Plan the uncoded baseline instead.")
@click.option("--table", is_flag=True, help="Also render the plans on stderr.")
def plan(q, n, cm, cs, cr, t_bits, mode, uncoded, table):
    """Compute the optimal repetition r*, server count K* and time T*.

    Example:
        cdcplan plan --q 3 --cm 1 --cs 2 --cr 1 --mode seq

    """
    spec = _job_spec(q, n, cm, cs, cr, t_bits)
    plans = [plan_for(spec, m, coded=not uncoded) for m in _modes(mode)]

    if table and not show_plans(plans, console):
        raise click.ClickException("Error rendering the plans")

    _emit({p.mode: p.to_dict() for p in plans})


@cdcplan.command()
@job_options()
@click.option("--mode", type=click.Choice(["seq", "par"]), default="seq")
@click.option("--k", type=click.IntRange(min=1), default=None, help="Override K*.")
@click.option("--pad", is_flag=True, help="Raise N to the least compatible value.")
@click.option("--uncoded", is_flag=True, help="Unicast shuffle on the same layout.")
@click.option(
    "--helper-epsilon",
    type=RATIONAL,
    default=DEFAULT_HELPER_EPSILON,
    envvar="CDC_HELPER_EPSILON",
    help="Helper load target when r* = 0.",
)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def build(q, n, cm, cs, cr, t_bits, mode, k, pad, uncoded, helper_epsilon, out):
    """Generate the Map placement and Shuffle plan of the optimal scheme.

    The scheme (plan, layout and shuffle) is written as JSON to ``--out`` or
    to stdout.

    Raises:
        InfeasibleError: If N does not fit the batches or K is too small.
        click.ClickException: If the scheme file cannot be written.

    """
    spec = _job_spec(q, n, cm, cs, cr, t_bits)
    plan_, layout, shuffle = _build(
        spec, MODE_NAMES[mode], k, pad, uncoded, helper_epsilon
    )
    scheme = {
        "plan": plan_.to_dict(),
        "layout": layout.to_dict(),
        "shuffle": shuffle.to_dict(),
    }

    if out is None:
        _emit(scheme)
    elif not export_json(scheme, out):
        raise click.ClickException(f"Failed to write scheme to '{out}'.")
    else:
        console.print(
            f"✅ [green]Scheme with K={layout.placement.k}, "
            f"N={layout.spec.n} saved to '{out}'.[/green]"
        )


@cdcplan.command()
@click.option("--scheme", type=click.Path(exists=True, dir_okay=False))
@job_options(required=False)
@click.option("--mode", type=click.Choice(["seq", "par"]), default=None)
@click.option("--k", type=click.IntRange(min=1), default=None)
@click.option("--pad", is_flag=True)
@click.option("--uncoded", is_flag=True)
@click.option(
    "--helper-epsilon",
    type=RATIONAL,
    default=DEFAULT_HELPER_EPSILON,
    envvar="CDC_HELPER_EPSILON",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--trace", type=click.File("w"), default=None, help="JSON-lines message log."
)
def simulate(
    scheme, q, n, cm, cs, cr, t_bits, mode, k, pad, uncoded, helper_epsilon, seed, trace
):
    """Execute a scheme on synthetic data and check it against the oracle.

    The scheme is read from ``--scheme`` or built from the job flags.

    Raises:
        click.ClickException: If decoding fails or the outputs are wrong.

    """
    if scheme is not None:
        layout, shuffle = _load_scheme(scheme)
        run_mode = MODE_NAMES[mode] if mode else layout.mode
    else:
        spec = _job_spec(q, n, cm, cs, cr, t_bits)
        run_mode = MODE_NAMES[mode or "seq"]
        _, layout, shuffle = _build(spec, run_mode, k, pad, uncoded, helper_epsilon)

    result = run(layout, shuffle, seed, run_mode, trace=trace)
    _emit(result.to_dict())

    if result.failure is not None:
        raise click.ClickException(f"Simulation failed: {result.failure}")
    if not result.oracle_match:
        raise click.ClickException("Outputs differ from the centralized oracle.")


@cdcplan.command()
@click.option("--scheme", type=click.Path(exists=True, dir_okay=False), required=True)
def bound(scheme):
    """Lower-bound the load and execution times of a scheme's placement.

    Raises:
        InfeasibleError: If the placement is invalid or not single-reducer.

    """
    layout, _ = _load_scheme(scheme)
    try:
        report = time_lower_bounds(layout.placement, layout.spec)
    except ValueError as e:
        raise InfeasibleError(str(e)) from None
    _emit(report.to_dict())


@cdcplan.command()
@job_options()
@click.option("--kmax", type=click.IntRange(min=1), required=True)
@click.option("--mode", type=click.Choice(["seq", "par"]), default="seq")
@click.option(
    "--budget",
    type=click.IntRange(min=1),
    default=DEFAULT_SEARCH_BUDGET,
    envvar="CDC_SEARCH_BUDGET",
    show_default=True,
)
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=1,
    envvar="CDC_THREADS",
    show_default=True,
)
@click.option("--no-prune", is_flag=True, help="Also enumerate Reduce assignments.")
def search(q, n, cm, cs, cr, t_bits, kmax, mode, budget, threads, no_prune):
    """Exhaustively minimise the bounded execution time on a tiny instance.

    Example:
        cdcplan search --q 2 --n 4 --kmax 4 --cm 1 --cs 1 --cr 1 --mode seq

    Raises:
        InfeasibleError: If the enumeration exceeds the budget.

    """
    spec = _job_spec(q, n, cm, cs, cr, t_bits)
    if kmax < spec.q:
        raise click.BadParameter(
            f"must be at least Q={spec.q}", param_hint="'--kmax'"
        )
    try:
        result = brute_force_search(
            spec,
            kmax,
            MODE_NAMES[mode],
            budget=budget,
            workers=threads,
            prune=not no_prune,
        )
    except SearchBudgetError as e:
        raise InfeasibleError(f"{e}; raise CDC_SEARCH_BUDGET or shrink N") from None
    _emit(result.to_dict())


def _sweep_ratios(low: Fraction, high: Fraction, steps: int) -> list[Fraction]:
    if steps == 1:
        return [low]
    return [low + (high - low) * i / (steps - 1) for i in range(steps)]


def _decimal(value: Fraction) -> str:
    return f"{float(value):.10g}"


@cdcplan.command()
@click.option("--q", type=click.IntRange(min=1), required=True)
@click.option("--q-max", type=click.IntRange(min=1), default=None)
@click.option("--ratio-min", type=RATIONAL, required=True, help="Smallest c_s/c_m.")
@click.option("--ratio-max", type=RATIONAL, required=True, help="Largest c_s/c_m.")
@click.option("--steps", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--mode", type=click.Choice(["seq", "par"]), default="seq")
@click.option("--cr", type=RATIONAL, default=Fraction(0))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def sweep(q, q_max, ratio_min, ratio_max, steps, mode, cr, out):
    """Tabulate coded against uncoded optimal times over Q and c_s/c_m.

    c_m is fixed to 1. Times are reported as decimals with exact sidecar
    columns; the gain column excludes the Reduce time.

    Raises:
        click.BadParameter: If the ratio range is empty or not positive.

    """
    if ratio_min <= 0 or ratio_max < ratio_min:
        raise click.BadParameter(
            "need 0 < ratio-min <= ratio-max", param_hint="'--ratio-min'"
        )
    q_max = q if q_max is None else q_max
    if q_max < q:
        raise click.BadParameter("must be at least --q", param_hint="'--q-max'")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    run_mode = MODE_NAMES[mode]
    for q_value in range(q, q_max + 1):
        for ratio in _sweep_ratios(ratio_min, ratio_max, steps):
            spec = JobSpec(q_value, 1, Fraction(1), ratio, cr)
            coded = plan_for(spec, run_mode, coded=True)
            uncoded = plan_for(spec, run_mode, coded=False)
            writer.writerow(
                [
                    q_value,
                    _decimal(ratio),
                    _decimal(coded.r_star),
                    "" if coded.k_star is None else coded.k_star,
                    _decimal(coded.t_star),
                    _decimal(uncoded.t_star),
                    _decimal(compare_coded_uncoded(spec, run_mode)),
                    str(ratio),
                    str(coded.r_star),
                    str(coded.t_star),
                    str(uncoded.t_star),
                ]
            )

    if out is None:
        click.echo(buffer.getvalue(), nl=False)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(buffer.getvalue())
    except OSError as e:
        raise click.ClickException(f"Failed to write '{out}': {e}") from None
    console.print(f"✅ [green]Sweep saved to '{out}'.[/green]")


def main():
    """Entry point for the CLI tool."""
    cdcplan()


if __name__ == "__main__":
    main()
