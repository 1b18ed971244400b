"""Command line entry points: check a contract, run a scenario, serve HTTP."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .dsl import InvalidContractText, ParseError, parse, serialize
from .scenario import Scenario, ScenarioError, run_scenario


@click.group()
def main() -> None:
    """Deterministic contract engine tools."""


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--canonical", is_flag=True, help="Print the canonical form on success.")
def check(source: Path, canonical: bool) -> None:
    """Parse and validate a contract file; exit 0 only if it is clean."""
    text = source.read_text(encoding="utf-8")
    try:
        spec = parse(text)
    except ParseError as exc:
        click.echo(f"{source}: {exc}", err=True)
        sys.exit(1)
    except InvalidContractText as exc:
        for error in exc.errors:
            click.echo(f"{source}: {error}", err=True)
        sys.exit(1)
    if canonical:
        click.echo(serialize(spec), nl=False)
    else:
        click.echo(f"ok: {spec.id} ({len(spec.clauses)} clauses, {len(spec.gaps)} gaps)")


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def run(scenario_file: Path) -> None:
    """Run a scenario file and print its canonical report."""
    try:
        scenario = Scenario.load(scenario_file)
        report = run_scenario(scenario)
    except ScenarioError as exc:
        click.echo(f"{scenario_file}: {exc}", err=True)
        sys.exit(1)
    sys.stdout.buffer.write(report.to_bytes())


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Serve the HTTP interface."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
