# strategem/cli.py
#
# Command-line entry point:
#   strategem run SCENARIO      one experiment, CSV + summary artifacts
#   strategem bench CONFIG      orientation accuracy over random models
#   strategem validate SCENARIO schema and model checks only
#
# Exit codes: 0 success, 2 scenario/schema error, 3 runtime model error.

import functools
import sys

import click
from pydantic import ValidationError

from strategem import __version__
from strategem.config import logger, settings
from strategem.core.errors import ScenarioError, StrategemError
from strategem.services.experiment_service import (
    execute_scenario,
    prepare_bench,
    prepare_scenario,
    run_bench,
)
from strategem.storage.storage import save_run

EXIT_SCENARIO = 2
EXIT_RUNTIME = 3


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ScenarioError, ValidationError) as e:
            click.echo(f"scenario error: {e}", err=True)
            sys.exit(EXIT_SCENARIO)
        except StrategemError as e:
            click.echo(f"model error ({type(e).__name__}): {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def _threads(value: int | None) -> int:
    return value if value is not None else settings.threads


seed_option = click.option("--seed", type=int, default=None, help="Override the file's seed.")
out_option = click.option(
    "--out", "out_dir", type=click.Path(file_okay=False), default=None,
    help="Output directory (default: scenario 'output' or STRATEGEM_OUTPUT_DIR).",
)
threads_option = click.option(
    "--threads", type=click.IntRange(min=1), default=None,
    help="Worker threads (fallback STRATEGEM_THREADS). Never changes results.",
)


@click.group()
@click.version_option(__version__, prog_name="strategem")
def cli():
    """Causal strategic classification experiments."""


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@seed_option
@out_option
@threads_option
@_exit_codes
def run(scenario, seed, out_dir, threads):
    """Run one scenario file and write its tables."""
    prepared = prepare_scenario(scenario, seed)
    result = execute_scenario(prepared, _threads(threads))
    for path in save_run(result, out_dir or prepared.scenario.output):
        click.echo(str(path))


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@seed_option
@out_option
@threads_option
@_exit_codes
def bench(config, seed, out_dir, threads):
    """Orient random linear-Gaussian models with both reductions."""
    bench_config, raw = prepare_bench(config, seed)
    result = run_bench(bench_config, raw, _threads(threads))
    click.echo(result.primary.to_string(index=False))
    for path in save_run(result, out_dir):
        click.echo(str(path))


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@_exit_codes
def validate(scenario):
    """Check a scenario file without running it."""
    prepared = prepare_scenario(scenario)
    s = prepared.scenario
    logger.debug(f"Validated {scenario}")
    click.echo(
        f"OK {s.scenario_id}: {s.experiment}, {len(prepared.scm.names)} nodes, "
        f"{len(prepared.scm.dag.edges)} edges, B={prepared.scm.bound:.6g}"
    )


def main():
    cli()


if __name__ == "__main__":
    main()
