"""Command-line entry point for the experiment suite."""

import logging
import os

import click

from app.models import ExperimentConfig
from app.services.experiment_service import ExperimentRunner, ParameterError, UnknownExperimentError
from app.services.report_service import check_line


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else os.getenv("MEANVALUE_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _parse_params(pairs: tuple[str, ...]) -> dict[str, str]:
    params = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise click.UsageError(f"--param expects key=value, got {pair!r}")
        params[key.strip()] = raw.strip()
    return params


@click.group()
def main():
    """Shift total variation and long-run value experiments."""


@main.command(name="list")
def list_experiments():
    """Print experiment ids with the result each one reproduces."""
    for info in ExperimentRunner().experiments():
        click.echo(f"{info.id:<14} {info.anchor}")


@main.command()
@click.argument("experiment_id")
@click.option("--param", "params", multiple=True, help="Parameter override key=value (repeatable).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Artifact directory.")
@click.option("--seed", type=int, default=None, help="Base RNG seed.")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None, help="JSON parameter file.")
@click.option(
    "--format",
    "report_format",
    type=click.Choice(["csv", "text-summary"]),
    default="csv",
    show_default=True,
    help="Summary artifacts to write.",
)
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def run(
    ctx: click.Context,
    experiment_id: str,
    params: tuple[str, ...],
    out_dir: str | None,
    seed: int | None,
    config_file: str | None,
    report_format: str,
    verbose: bool,
):
    """Run one experiment, or all of them, and exit nonzero on a failed check."""
    _configure_logging(verbose)
    runner = ExperimentRunner()
    if config_file:
        runner.config_file = config_file
    config = ExperimentConfig(
        experiment_id=experiment_id,
        params=_parse_params(params),
        out_dir=out_dir,
        seed=seed,
        report_format=report_format,
    )
    try:
        results = runner.run(config)
    except (UnknownExperimentError, ParameterError) as exc:
        raise click.UsageError(str(exc)) from exc
    except (ValueError, RuntimeError) as exc:
        raise click.ClickException(str(exc)) from exc

    for result in results:
        click.echo(f"{'PASS' if result.passed else 'FAIL'} {result.experiment_id}: {result.anchor}")
        for check in result.checks:
            if not check.passed or verbose:
                click.echo(f"  {check_line(check)}")
    if not all(result.passed for result in results):
        ctx.exit(1)


if __name__ == "__main__":
    main()
