#!/usr/bin/env python3
"""
oodkit - out-of-distribution detection on autoencoder activation traces
Command-line entry point: one subcommand per pipeline stage
"""

import logging
import os
import sys

import click

# Add current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

# Import local modules (utils.config loads .env on import)
from commands.reporting import eval_cmd, rank
from commands.scoring import compare, score
from commands.synthesis import synth
from commands.training import encode_cmd, train_ae
from utils.config import LOG_LEVELS
from utils.errors import EXIT_OK, EXIT_USAGE

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class PipelineGroup(click.Group):
    """click group whose usage errors exit with 1 instead of click's 2"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
        except click.ClickException as e:
            e.show()
            rv = EXIT_USAGE
        except click.Abort:
            click.echo("Aborted!", err=True)
            rv = EXIT_USAGE
        code = rv if isinstance(rv, int) else EXIT_OK
        if not standalone_mode:
            return code
        sys.exit(code)


@click.group(cls=PipelineGroup)
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), envvar="OODKIT_LOG_LEVEL",
              default="INFO", show_default=True, help="Logging level (env OODKIT_LOG_LEVEL)")
@click.version_option("1.0.0", prog_name="oodkit")
def cli(log_level):
    """Out-of-distribution detection: train, encode, score, evaluate, rank"""
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT, force=True)


# Register commands
cli.add_command(train_ae)
cli.add_command(encode_cmd)
cli.add_command(score)
cli.add_command(compare)
cli.add_command(eval_cmd)
cli.add_command(rank)
cli.add_command(synth)


def main():
    cli(prog_name="oodkit")


if __name__ == '__main__':
    main()
