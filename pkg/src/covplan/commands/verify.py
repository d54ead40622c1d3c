"""covplan verify - Run the randomized oracle suites."""

from collections import defaultdict
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from covplan.commands.config import EXIT_CONFIG
from covplan.core.errors import ConfigError
from covplan.core.settings import worker_count
from covplan.core.verify import SUITES, CaseResult, run_suites

console = Console()

EXIT_FAILED = 1


def _matrix(results: list[CaseResult]) -> Table:
    """Pass/fail counts per suite and case."""
    grouped: dict[tuple[str, str], list[CaseResult]] = defaultdict(list)
    for r in results:
        grouped[(r.suite, r.case)].append(r)

    table = Table(title="Verification")
    table.add_column("Suite", style="cyan")
    table.add_column("Case")
    table.add_column("Passed", justify="right")
    table.add_column("Failed", justify="right")
    table.add_column("Worst error", justify="right")
    table.add_column("Tolerance", justify="right")
    for (suite, case), rows in grouped.items():
        failed = sum(not r.ok for r in rows)
        worst = max(r.error for r in rows)
        table.add_row(
            suite,
            case,
            str(len(rows) - failed),
            f"[red]{failed}[/red]" if failed else "0",
            f"{worst:.2e}",
            f"{rows[0].tolerance:.0e}",
        )
    return table


def _failures(results: list[CaseResult]) -> Table:
    table = Table(title="Failing cases")
    table.add_column("Suite", style="cyan")
    table.add_column("Seed", justify="right")
    table.add_column("Case")
    table.add_column("Error", justify="right")
    table.add_column("Detail")
    for r in results:
        table.add_row(r.suite, str(r.seed), r.case, f"{r.error:.3e}", r.detail)
    return table


def verify(
    seeds: Annotated[
        int,
        typer.Option("--seeds", "-n", min=1, help="Random instances per suite"),
    ] = 100,
    max_n: Annotated[
        int,
        typer.Option("--max-n", min=5, help="Largest prior state dimension"),
    ] = 200,
    suite: Annotated[
        Optional[list[str]],
        typer.Option("--suite", "-s", help=f"Only these suites ({', '.join(SUITES)})"),
    ] = None,
    workers: Annotated[
        Optional[int],
        typer.Option("--workers", "-w", min=1, help="Worker processes (default: COVPLAN_THREADS)"),
    ] = None,
):
    """
    Check incremental results against dense linear algebra on random instances.

    Examples:

        covplan verify --seeds 1

        covplan verify --seeds 100 --max-n 200 --suite lemmas --suite planner
    """
    unknown = [s for s in suite or [] if s not in SUITES]
    if unknown:
        console.print(
            f"[red]Unknown suite(s): {', '.join(unknown)}. "
            f"Choose from {', '.join(SUITES)}[/red]"
        )
        raise typer.Exit(EXIT_CONFIG)

    try:
        pool = workers or worker_count()
    except ConfigError as e:
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(EXIT_CONFIG) from e

    names = suite or list(SUITES)
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    ) as progress:
        progress.add_task(
            f"Running {len(names)} suite(s) x {seeds} seed(s) on {pool} worker(s)...", total=None
        )
        results = run_suites(seeds, max_n, names, workers=pool)

    console.print(_matrix(results))

    failed = [r for r in results if not r.ok]
    if failed:
        console.print(_failures(failed))
        console.print(f"[red]✗ {len(failed)} of {len(results)} checks failed[/red]")
        raise typer.Exit(EXIT_FAILED)

    console.print(f"[green]✓ All {len(results)} checks passed[/green]")
