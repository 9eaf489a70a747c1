import os
import sys
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import logging
from typing import List, Optional

import click

from src.modules.blur.blur_commands import blur_cmd, gen_blur_dataset_cmd
from src.modules.deblur.deblur_commands import deblur_cmd, project_range_cmd
from src.modules.evaluation.evaluation_commands import eval_cmd, list_runs_cmd, sweep_cmd
from src.modules.training.training_commands import gen_image_dataset_cmd, sample_cmd, train_vae_cmd
from src.shared.cli_options import configure_logging, echo_failure
from src.shared.errors import GenPriorError, NumericError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_NUMERIC_ERROR = 2


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Blind deblurring with generative priors"""


cli.add_command(gen_blur_dataset_cmd)
cli.add_command(gen_image_dataset_cmd)
cli.add_command(train_vae_cmd)
cli.add_command(sample_cmd)
cli.add_command(blur_cmd)
cli.add_command(deblur_cmd)
cli.add_command(project_range_cmd)
cli.add_command(eval_cmd)
cli.add_command(sweep_cmd)
cli.add_command(list_runs_cmd)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 for user errors, 2 for numeric failures"""
    configure_logging()
    try:
        cli.main(args=argv, prog_name="genprior", standalone_mode=False)
    except click.exceptions.Abort:
        echo_failure("Aborted")
        return EXIT_USER_ERROR
    except click.ClickException as e:
        e.show()
        return EXIT_USER_ERROR
    except NumericError as e:
        logger.error("Numeric failure: %s", e)
        echo_failure(f"Numeric failure: {e}")
        return EXIT_NUMERIC_ERROR
    except GenPriorError as e:
        echo_failure(str(e))
        return EXIT_USER_ERROR
    except OSError as e:
        echo_failure(f"I/O error: {e}")
        return EXIT_USER_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
