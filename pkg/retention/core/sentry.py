"""
Failed-run reporting to Sentry.

Active only when SENTRY_DSN is set. Expected failures (a `RetentionError`
with its own exit code) are not reported; only crashes are, tagged with
the command, seed and config file of the run.
"""
import logging
from typing import Optional, Sequence

from retention import __version__
from retention.core.config import settings

logger = logging.getLogger(__name__)
_enabled = False


def init_sentry(dsn: Optional[str] = None) -> bool:
    """Returns True when reporting is on."""
    global _enabled
    dsn = dsn or settings.SENTRY_DSN
    if not dsn:
        return False

    try:
        import sentry_sdk
        from sentry_sdk.integrations.logging import LoggingIntegration
    except ImportError:
        logger.warning("Sentry: sentry-sdk not installed; crashed runs will not be reported")
        return False

    try:
        sentry_sdk.init(
            dsn=dsn,
            environment=settings.ENVIRONMENT,
            release=f"retention@{__version__}",
            # training progress lines become breadcrumbs; events only come from report_failed_run
            integrations=[LoggingIntegration(level=logging.INFO, event_level=None)],
            send_default_pii=False,
        )
    except Exception as e:
        logger.warning(f"Sentry: init failed ({e}); continuing without it")
        return False

    _enabled = True
    logger.info(f"Sentry: reporting crashed runs (env={settings.ENVIRONMENT})")
    return True


def report_failed_run(
    exc: Exception,
    command: str,
    seed: Optional[int] = None,
    config_path: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> None:
    if not _enabled:
        return
    import sentry_sdk

    with sentry_sdk.push_scope() as scope:
        scope.set_tag("command", command)
        scope.set_tag("seed", "config" if seed is None else str(seed))
        scope.set_context("run", {"config": config_path, "overrides": list(overrides)})
        sentry_sdk.capture_exception(exc)
