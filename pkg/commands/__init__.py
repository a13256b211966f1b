"""
Command-line subcommands, one module per pipeline area
"""

import functools
import logging
from typing import Any, Callable, Dict, Optional

import click

from utils.config import PipelineConfig, load_config
from utils.errors import EXIT_RUNTIME, OodkitError

logger = logging.getLogger(__name__)


def handle_errors(f: Callable) -> Callable:
    """Report library errors as '❌ <message>' on stderr and exit with their code"""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except OodkitError as e:
            logger.debug("%s failed", f.__name__, exc_info=True)
            click.echo(f"❌ {e}", err=True)
            click.get_current_context().exit(e.exit_code)
        except OSError as e:
            logger.debug("%s failed", f.__name__, exc_info=True)
            click.echo(f"❌ {e}", err=True)
            click.get_current_context().exit(EXIT_RUNTIME)
    return wrapper


def pipeline_options(f: Callable) -> Callable:
    """--config, --seed and --out, shared by every subcommand"""
    f = click.option("--out", "output_dir", type=click.Path(file_okay=False),
                     help="Output directory (default: OODKIT_OUTPUT_DIR or ./runs)")(f)
    f = click.option("--seed", type=click.IntRange(min=0), help="Global seed")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="JSON pipeline configuration")(f)
    return f


def resolve_config(config_path: Optional[str], seed: Optional[int], output_dir: Optional[str],
                   overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    values = {"seed": seed, "output_dir": output_dir}
    values.update(overrides or {})
    return load_config(config_path, values)


def artifact_echo(cfg: PipelineConfig, command: str, **extra: Any) -> Dict[str, Any]:
    """Comment-header echo embedded in every text artifact"""
    echo = {"command": command, "config": cfg.echo()}
    echo.update({k: v for k, v in extra.items() if v is not None})
    return echo
