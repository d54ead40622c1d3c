"""covplan passive - Covariance recovery benchmark along a goal route."""

from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.table import Table

from covplan.commands.config import EXIT_CONFIG, parse_methods, resolve_run
from covplan.core.errors import ConfigError, CovplanError, MethodDisagreementError
from covplan.core.runlog import RunLog
from covplan.core.runner import run_passive
from covplan.core.settings import config_hash, validate_scenario

console = Console()

EXIT_FAILED = 1


def print_timing_summary(log: RunLog) -> None:
    """Per-column wall-time aggregates of a finished (or aborted) run."""
    summary = log.timing_summary()
    if not summary:
        return
    table = Table(title="Timings (seconds per step)")
    table.add_column("Column", style="cyan")
    table.add_column("Median", justify="right")
    table.add_column("Mean", justify="right")
    table.add_column("Max", justify="right")
    table.add_column("Total", justify="right")
    for name, agg in summary.items():
        table.add_row(
            name,
            f"{agg['median']:.6f}",
            f"{agg['mean']:.6f}",
            f"{agg['max']:.6f}",
            f"{agg['total']:.3f}",
        )
    console.print(table)


def passive(
    config: Annotated[
        Optional[Path],
        typer.Option("--config", "-c", help="Scenario file (.toml or .yaml)"),
    ] = None,
    profile: Annotated[
        Optional[str],
        typer.Option("--profile", "-p", help="Run profile name (from covplan config profile)"),
    ] = None,
    methods: Annotated[
        Optional[str],
        typer.Option(
            "--methods", "-m",
            help="Recovery methods, comma-separated (recursive,backsub,twostage,onestage)",
        ),
    ] = None,
    out: Annotated[
        Optional[Path],
        typer.Option("--out", "-o", help="Output directory"),
    ] = None,
    steps: Annotated[
        Optional[int],
        typer.Option("--steps", help="Override the scenario's step count"),
    ] = None,
    seed: Annotated[
        Optional[int],
        typer.Option("--seed", help="Override the scenario's seed"),
    ] = None,
    quiet: Annotated[
        bool,
        typer.Option("--quiet", "-q", help="No progress output"),
    ] = False,
):
    """
    Recover every marginal covariance each step by each enabled method and cross-check them.

    Examples:

        covplan passive --config scenarios/small.toml --out runs/small

        covplan passive --config scenarios/small.toml --methods backsub,twostage --out runs/x
    """
    scenario, profile_config = resolve_run(config, profile)

    try:
        raw_methods = methods or profile_config.get("methods")
        if raw_methods:
            scenario.methods = parse_methods(raw_methods)
        if steps is not None:
            scenario.steps = steps
        if seed is not None:
            scenario.seed = seed
        validate_scenario(scenario, "command line")
    except ConfigError as e:
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(EXIT_CONFIG) from e

    out_dir = out or (Path(profile_config["out"]) if profile_config.get("out") else None)
    if out_dir is None:
        console.print("[red]No output directory specified. Use --out or --profile[/red]")
        raise typer.Exit(EXIT_CONFIG)

    digest = config_hash(scenario)
    if not quiet:
        console.print(
            f"[dim]Methods: {', '.join(scenario.methods)}  steps: {scenario.steps}  "
            f"seed: {scenario.seed}  hash: {digest[:12]}[/dim]"
        )

    log = RunLog("passive", list(scenario.methods), cross_check=len(scenario.methods) > 1)
    try:
        run_passive(scenario, log, quiet=quiet)
    except MethodDisagreementError as e:
        log.write(out_dir, digest, scenario.seed)
        table = Table(title=f"Method disagreement at step {e.step}")
        table.add_column("Method", style="cyan")
        table.add_column(f"Max |difference| vs {scenario.methods[0]}", justify="right")
        for name, err in e.errors.items():
            style = "red" if err > e.tolerance else "green"
            table.add_row(name, f"[{style}]{err:.3e}[/{style}]")
        console.print(table)
        console.print(f"[red]{e}[/red]")
        console.print(f"[dim]Partial run log written to {out_dir}[/dim]")
        raise typer.Exit(EXIT_FAILED) from e
    except CovplanError as e:
        log.aborted = str(e)
        log.write(out_dir, digest, scenario.seed)
        console.print(f"[red]Run failed: {e}[/red]")
        raise typer.Exit(EXIT_FAILED) from e

    written = log.write(out_dir, digest, scenario.seed)
    if not quiet:
        print_timing_summary(log)
        last = log.steps[-1]
        console.print(
            f"[green]✓ {len(log.steps)} steps, final dimension {last.n}, "
            f"{sum(r.fallback for r in log.steps)} fallback step(s)[/green]"
        )
        for p in written:
            console.print(f"  {p}")
