"""
Command logging wrapper.

Logs one line per command with its exit code and wall time, and turns
`RetentionError`s into their stable exit codes.
"""
import functools
import logging
import time

import click

from retention.core.errors import RetentionError
from retention.core.sentry import report_failed_run

logger = logging.getLogger(__name__)


def logged_command(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        name = ctx.command.name
        start_time = time.time()
        exit_code = 0

        try:
            func(*args, **kwargs)
        except RetentionError as e:
            exit_code = e.exit_code
            logger.error(f"{type(e).__name__}: {e.message}")
            click.echo(f"error: {e.message}", err=True)
        except (click.ClickException, click.exceptions.Exit):
            raise
        except Exception as e:
            logger.exception("Unhandled exception during command")
            run = ctx.find_root().obj or {}
            report_failed_run(
                e,
                name,
                seed=run.get("seed"),
                config_path=run.get("config_path"),
                overrides=run.get("overrides", ()),
            )
            exit_code = 1
            click.echo(f"error: unexpected failure ({type(e).__name__}: {e})", err=True)
        finally:
            logger.info(
                "CMD %s | Exit: %s | Time: %.3fs",
                name,
                exit_code,
                time.time() - start_time,
            )

        if exit_code:
            ctx.exit(exit_code)

    return wrapper
