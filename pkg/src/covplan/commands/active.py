"""covplan active - Belief space planning with flat and tree evaluation."""

from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.table import Table
from rich.tree import Tree

from covplan.commands.config import EXIT_CONFIG, resolve_run
from covplan.commands.passive import EXIT_FAILED, print_timing_summary
from covplan.core.errors import ConfigError, CovplanError, DecisionMismatchError
from covplan.core.fgp import FGPTree, outline, outline_text
from covplan.core.runlog import RunLog
from covplan.core.runner import run_active
from covplan.core.settings import config_hash, validate_scenario

console = Console()

EXIT_MISMATCH = 3


class Objective(str, Enum):
    unfocused = "unfocused"  # IG over the whole state
    focused_lastpose = "focused-lastpose"  # entropy of the terminal pose
    focused_landmarks = "focused-landmarks"  # IG over mapped landmarks


def render_tree(tree: FGPTree, title: str) -> Tree:
    """rich Tree from the depth-first outline."""
    root = Tree(f"[bold]{title}[/bold]")
    stack: list[Tree] = [root]
    for depth, text in outline(tree):
        del stack[depth + 1 :]
        stack.append(stack[-1].add(text))
    return root


def _score_table(error: DecisionMismatchError) -> Table:
    table = Table(title=f"Scores at step {error.step}")
    table.add_column("Candidate", style="cyan", justify="right")
    table.add_column("Flat", justify="right")
    table.add_column("Tree", justify="right")
    table.add_column("Difference", justify="right")
    for cid in sorted(error.flat):
        flat = error.flat[cid]
        tree = error.tree.get(cid)
        diff = "-" if tree is None else f"{abs(flat - tree):.3e}"
        table.add_row(str(cid), f"{flat:.12g}", "-" if tree is None else f"{tree:.12g}", diff)
    return table


def active(
    config: Annotated[
        Optional[Path],
        typer.Option("--config", "-c", help="Scenario file (.toml or .yaml)"),
    ] = None,
    profile: Annotated[
        Optional[str],
        typer.Option("--profile", "-p", help="Run profile name (from covplan config profile)"),
    ] = None,
    objective: Annotated[
        Optional[Objective],
        typer.Option("--objective", help="Information objective (default: from scenario)"),
    ] = None,
    out: Annotated[
        Optional[Path],
        typer.Option("--out", "-o", help="Output directory"),
    ] = None,
    steps: Annotated[
        Optional[int],
        typer.Option("--steps", help="Override the scenario's planning step count"),
    ] = None,
    seed: Annotated[
        Optional[int],
        typer.Option("--seed", help="Override the scenario's seed"),
    ] = None,
    dump_tree: Annotated[
        bool,
        typer.Option("--dump-tree", help="Write each step's action tree to tree_step<k>.txt"),
    ] = False,
    quiet: Annotated[
        bool,
        typer.Option("--quiet", "-q", help="No progress output"),
    ] = False,
):
    """
    Plan each step over ~200 candidate trajectories, scoring them flat and over the action tree.

    Examples:

        covplan active --config scenarios/small.toml --out runs/active

        covplan active --config scenarios/small.toml --objective focused-landmarks \\
            --out runs/focused --dump-tree
    """
    scenario, profile_config = resolve_run(config, profile)

    try:
        if objective is not None:
            scenario.objective = objective.value
        elif profile_config.get("objective"):
            scenario.objective = profile_config["objective"]
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

    on_tree = None
    if dump_tree:
        out_dir.mkdir(parents=True, exist_ok=True)

        def on_tree(k: int, tree: FGPTree) -> None:
            (out_dir / f"tree_step{k}.txt").write_text(outline_text(tree))
            # console shows only the first tree; the rest go to files
            if k == 0 and not quiet:
                console.print(render_tree(tree, f"Action tree, step {k}"))

    digest = config_hash(scenario)
    if not quiet:
        console.print(
            f"[dim]Objective: {scenario.objective}  steps: {scenario.steps}  "
            f"seed: {scenario.seed}  hash: {digest[:12]}[/dim]"
        )

    log = RunLog("active", ["flat", "tree"])
    try:
        run_active(scenario, log, quiet=quiet, on_tree=on_tree)
    except DecisionMismatchError as e:
        log.write(out_dir, digest, scenario.seed)
        console.print(_score_table(e))
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(EXIT_MISMATCH) from e
    except CovplanError as e:
        log.aborted = str(e)
        log.write(out_dir, digest, scenario.seed)
        console.print(f"[red]Run failed: {e}[/red]")
        raise typer.Exit(EXIT_FAILED) from e

    written = log.write(out_dir, digest, scenario.seed)
    if not quiet:
        print_timing_summary(log)
        console.print(
            f"[green]✓ {len(log.steps)} planning steps, "
            f"{log.decisions_agreed} identical flat/tree decisions[/green]"
        )
        for p in written:
            console.print(f"  {p}")
