"""
retention audit: group fairness of future-dropout predictions, and the
before/after comparison when a mitigation is configured.
"""
import logging
from pathlib import Path

import click

from retention.cli.context import note_vectors, run_config, write_json
from retention.cli.middleware.logging_middleware import logged_command
from retention.core.config import settings
from retention.data.io import read_dataset
from retention.model.network import RetentionNetwork
from retention.pipeline import audit as run_audit

logger = logging.getLogger(__name__)


@click.command("audit")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Audit report file.")
@click.pass_context
@logged_command
def audit(ctx: click.Context, checkpoint: str, data_path: str, out_path: str | None):
    """Audit a checkpoint against the configured protected attribute."""
    config = run_config(ctx)
    network, meta = RetentionNetwork.load(checkpoint)
    dataset = read_dataset(data_path)
    vectors, note_dim = note_vectors(dataset, config)
    network.check_note_dim(note_dim)

    report = run_audit(
        network, dataset, config, vectors, meta.get("train_ids"), meta.get("test_ids"), meta.get("train_seed")
    )
    path = write_json(report, out_path or Path(settings.OUTPUT_DIR) / "audit.json")

    before = report["before"]
    click.echo(f"{'':<8}{'SPD':>9}{'EOD':>9}{'AOD':>9}{'DI':>9}{'ACC':>9}")
    for label in ("before", "after"):
        row = report[label]
        if row is None:
            continue
        cells = "".join(
            f"{'n/a':>9}" if row[k] is None else f"{row[k]:>9.3f}"
            for k in ("spd", "eod", "aod", "di", "accuracy")
        )
        click.echo(f"{label:<8}{cells}")
    fair = [k.upper() for k, ok in before["fair"].items() if ok]
    click.echo(f"fair before mitigation: {', '.join(fair) or 'none'}")
    click.echo(f"wrote {path}")
