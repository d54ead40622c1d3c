"""covplan CLI entrypoint."""

import typer

from covplan.commands import config
from covplan.commands.active import active
from covplan.commands.passive import passive
from covplan.commands.verify import verify

app = typer.Typer(
    name="covplan",
    help="Incremental covariance recovery and belief space planning experiments",
    no_args_is_help=True,
)

# Register commands
app.command("passive")(passive)
app.command("active")(active)
app.command("verify")(verify)

# Register config as a command group
app.add_typer(config.app, name="config", help="Manage run profiles and inspect scenarios")


@app.command()
def version():
    """Show covplan version."""
    from covplan import __version__

    typer.echo(f"covplan {__version__}")


if __name__ == "__main__":
    app()
