"""covplan config - Manage run profiles and inspect scenarios."""

from pathlib import Path
from typing import Annotated, Any, Optional

import typer
from rich.console import Console
from rich.table import Table

from covplan.core.errors import ConfigError
from covplan.core.settings import (
    OBJECTIVES,
    RECOVERY_METHOD_NAMES,
    ScenarioConfig,
    add_profile,
    config_hash,
    dump_scenario,
    get_config_path,
    get_profile,
    list_profiles,
    load_scenario,
    remove_profile,
)

app = typer.Typer(no_args_is_help=True)
console = Console()

EXIT_CONFIG = 2


def parse_methods(raw: str) -> list[str]:
    """Comma-separated recovery method names, order kept, duplicates dropped."""
    methods = list(dict.fromkeys(m.strip() for m in raw.split(",") if m.strip()))
    bad = [m for m in methods if m not in RECOVERY_METHOD_NAMES]
    if bad or not methods:
        raise ConfigError(
            "--methods",
            f"unknown method(s) {', '.join(bad) or '(none)'}; "
            f"choose from {', '.join(RECOVERY_METHOD_NAMES)}",
        )
    return methods


def resolve_run(
    scenario: Optional[Path], profile: Optional[str]
) -> tuple[ScenarioConfig, dict[str, Any]]:
    """Scenario and profile defaults for a run (CLI takes precedence over the profile).

    Exits with code 2 when the profile or scenario is missing or invalid.
    """
    profile_config: dict[str, Any] = {}
    if profile:
        profile_config = get_profile(profile) or {}
        if not profile_config:
            console.print(f"[red]Profile not found: {profile}[/red]")
            raise typer.Exit(EXIT_CONFIG)
        console.print(f"[dim]Using profile: {profile}[/dim]")

    path = scenario or profile_config.get("scenario")
    if not path:
        console.print("[red]No scenario specified. Use --config or --profile[/red]")
        raise typer.Exit(EXIT_CONFIG)

    try:
        config = load_scenario(Path(path))
    except ConfigError as e:
        console.print(f"[red]Invalid scenario: {e}[/red]")
        raise typer.Exit(EXIT_CONFIG) from e
    return config, profile_config


@app.command("path")
def path():
    """Show settings file location."""
    console.print(get_config_path())


@app.command("show-scenario")
def show_scenario(
    file: Annotated[Path, typer.Argument(help="Scenario file (.toml or .yaml)")],
):
    """Print a scenario with every default filled in, and its hash."""
    try:
        config = load_scenario(file)
    except ConfigError as e:
        console.print(f"[red]Invalid scenario: {e}[/red]")
        raise typer.Exit(EXIT_CONFIG) from e

    console.print(dump_scenario(config), markup=False, highlight=False)
    console.print(f"[dim]config_hash: {config_hash(config)}[/dim]")


# ============================================================================
# Profile commands
# ============================================================================

profile_app = typer.Typer(no_args_is_help=True)
app.add_typer(profile_app, name="profile", help="Manage run profiles")


@profile_app.command("add")
def profile_add(
    name: Annotated[str, typer.Argument(help="Profile name")],
    scenario: Annotated[
        Optional[Path],
        typer.Option("--scenario", "-c", help="Scenario file", resolve_path=True),
    ] = None,
    methods: Annotated[
        Optional[str],
        typer.Option("--methods", "-m", help="Default recovery methods (comma-separated)"),
    ] = None,
    objective: Annotated[
        Optional[str],
        typer.Option("--objective", help="Default planning objective"),
    ] = None,
    out: Annotated[
        Optional[Path],
        typer.Option("--out", "-o", help="Default output directory", resolve_path=True),
    ] = None,
):
    """
    Create a run profile.

    Example:
        covplan config profile add small --scenario scenarios/small.toml \\
            --methods backsub,twostage --out runs/small
    """
    profile: dict[str, Any] = {}

    if scenario:
        profile["scenario"] = str(scenario)
    if methods:
        try:
            profile["methods"] = ",".join(parse_methods(methods))
        except ConfigError as e:
            console.print(f"[red]{e}[/red]")
            raise typer.Exit(EXIT_CONFIG) from e
    if objective:
        if objective not in OBJECTIVES:
            console.print(f"[red]Objective must be one of {', '.join(OBJECTIVES)}[/red]")
            raise typer.Exit(EXIT_CONFIG)
        profile["objective"] = objective
    if out:
        profile["out"] = str(out)

    if not profile:
        console.print("[red]Must specify at least one option[/red]")
        raise typer.Exit(EXIT_CONFIG)

    add_profile(name, profile)
    console.print(f"[green]Added profile: {name}[/green]")

    for key, value in profile.items():
        console.print(f"  {key}: {value}")


@profile_app.command("list")
def profile_list():
    """List all profiles."""
    profiles = list_profiles()

    if not profiles:
        console.print(
            "[yellow]No profiles configured. Run: covplan config profile add <name>[/yellow]"
        )
        return

    table = Table(title="Profiles")
    table.add_column("Name", style="cyan")
    table.add_column("Scenario")
    table.add_column("Methods")
    table.add_column("Objective")
    table.add_column("Out")

    for name, cfg in profiles.items():
        table.add_row(
            name,
            cfg.get("scenario", ""),
            cfg.get("methods", ""),
            cfg.get("objective", ""),
            cfg.get("out", ""),
        )

    console.print(table)


@profile_app.command("show")
def profile_show(
    name: Annotated[str, typer.Argument(help="Profile name")],
):
    """Show profile details."""
    profile = get_profile(name)

    if not profile:
        console.print(f"[red]Profile not found: {name}[/red]")
        raise typer.Exit(1)

    console.print(f"\n[bold]Profile: {name}[/bold]\n")
    for key, value in profile.items():
        console.print(f"  {key}: {value}")


@profile_app.command("remove")
def profile_remove(
    name: Annotated[str, typer.Argument(help="Profile name to remove")],
):
    """Remove a profile."""
    if remove_profile(name):
        console.print(f"[green]Removed profile: {name}[/green]")
    else:
        console.print(f"[red]Profile not found: {name}[/red]")
        raise typer.Exit(1)
