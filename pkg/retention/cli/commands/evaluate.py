"""
retention evaluate: per-task metrics for a checkpoint, plus the
note-count and per-cause breakdown CSVs.
"""
import logging
from pathlib import Path

import click

from retention.cli.context import note_vectors, run_config, write_json
from retention.cli.middleware.logging_middleware import logged_command
from retention.core.config import settings
from retention.core.errors import EmptyDatasetError
from retention.data.io import read_dataset
from retention.model.network import RetentionNetwork
from retention.pipeline import evaluate_network, select

logger = logging.getLogger(__name__)


@click.command("evaluate")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--holdout-only", is_flag=True, help="Only the test ids recorded in the checkpoint.")
@click.pass_context
@logged_command
def evaluate(ctx: click.Context, checkpoint: str, data_path: str, out_dir: str | None, holdout_only: bool):
    """Evaluate a trained checkpoint on a dataset file."""
    config = run_config(ctx)
    out = Path(out_dir or settings.OUTPUT_DIR)
    network, meta = RetentionNetwork.load(checkpoint)
    dataset = read_dataset(data_path)
    if holdout_only:
        dataset = select(dataset, meta.get("test_ids") or [])
    if not dataset:
        raise EmptyDatasetError("evaluation split is empty", detail={"holdout_only": holdout_only})

    vectors, note_dim = note_vectors(dataset, config)
    network.check_note_dim(note_dim)
    report = evaluate_network(network, dataset, vectors, meta.get("duration_mean"))

    write_json(report.to_dict(), out / "metrics.json")
    report.write_breakdowns(out)
    click.echo(report.table())
    if report.note_trend_spearman is not None:
        click.echo(f"note-count trend (Spearman): {report.note_trend_spearman:.3f}")
