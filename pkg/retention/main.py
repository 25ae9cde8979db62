import logging
from typing import Optional, Tuple

import click

from retention import __version__
from retention.cli.commands.audit import audit
from retention.cli.commands.evaluate import evaluate
from retention.cli.commands.generate import generate
from retention.cli.commands.train import train
from retention.core.config import settings
from retention.core.sentry import init_sentry

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__, prog_name="retention")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML run config.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key (repeatable).")
@click.option("--seed", type=int, default=None, help="Run seed; also seeds the cohort.")
@click.option("--log-level", default=None, help="Overrides LOG_LEVEL.")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    overrides: Tuple[str, ...],
    seed: Optional[int],
    log_level: Optional[str],
):
    """Student retention: multi-task dropout prediction on synthetic cohorts."""
    logging.basicConfig(
        level=(log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    init_sentry()
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, overrides=overrides, seed=seed)


cli.add_command(generate)
cli.add_command(train)
cli.add_command(evaluate)
cli.add_command(audit)


if __name__ == "__main__":
    cli()
