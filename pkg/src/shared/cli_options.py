"""
Options and helpers shared by every subcommand
"""

import logging
import os
from functools import wraps
from typing import Callable, Optional

import click

from src.shared.errors import GenPriorError
from src.shared.run_log import RunLogService

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: int = 0) -> None:
    """Root handler; --verbose wins over GENPRIOR_LOG_LEVEL"""
    if verbose:
        level = logging.DEBUG
    else:
        level = getattr(logging, os.getenv('GENPRIOR_LOG_LEVEL', 'INFO').upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


SHARED_OPTIONS = {
    "preset": lambda: click.option("--preset", type=click.Choice(["desk32", "paper64"]), default="desk32",
                                   show_default=True, help="Named default set."),
    "seed": lambda: click.option("--seed", type=click.IntRange(min=0), envvar="GENPRIOR_SEED", default=0,
                                 show_default=True, help="Master seed (env GENPRIOR_SEED)."),
    "jobs": lambda: click.option("--jobs", type=click.IntRange(min=1), default=None,
                                 help="Worker threads for restarts, kernels and sweep cells (env GENPRIOR_JOBS)."),
    "config": lambda: click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                                   help="JSON file of option values; explicit flags override it."),
}


def cli_options(*names: str) -> Callable[[Callable], Callable]:
    """Attach --verbose and the named shared options; a command only takes the ones it honors"""
    unknown = set(names) - set(SHARED_OPTIONS)
    if unknown:
        raise ValueError(f"Unknown shared options: {sorted(unknown)}")

    def decorate(command: Callable) -> Callable:
        @wraps(command)
        def wrapper(*args, verbose: int = 0, **kwargs):
            if verbose:
                configure_logging(verbose)
            return command(*args, **kwargs)

        options = [SHARED_OPTIONS[name]() for name in names]
        options.append(click.option("--verbose", "-v", count=True, help="Debug logging."))
        for option in reversed(options):
            wrapper = option(wrapper)
        return wrapper

    return decorate


common_options = cli_options("preset", "seed", "jobs", "config")


def echo_success(message: str) -> None:
    click.echo(f"✅ {message}")


def echo_failure(message: str) -> None:
    click.echo(f"❌ {message}", err=True)


def record_failure(run_log: Optional[RunLogService], error: Exception) -> None:
    """Mark the run failed in result.json; main() echoes the error and picks the exit code"""
    if run_log is None:
        return
    message = str(error) if isinstance(error, GenPriorError) else f"{type(error).__name__}: {error}"
    run_log.update_log(status="failed", error_message=message)
