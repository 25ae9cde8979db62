"""
retention train: split, optionally SMOTE and reweigh, and train every fold.

Writes `fold<i>.npz` checkpoints and `trace_fold<i>.csv` loss traces
(one row per iteration) into the output directory.
"""
import logging
from pathlib import Path

import click

from retention.cli.context import note_vectors, run_config, write_json
from retention.cli.middleware.logging_middleware import logged_command
from retention.core.config import settings
from retention.data.io import read_dataset
from retention.pipeline import run_training

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, help="Folds trained in parallel.")
@click.pass_context
@logged_command
def train(ctx: click.Context, data_path: str, out_dir: str | None, workers: int):
    """Train the network on a dataset file."""
    config = run_config(ctx)
    out = Path(out_dir or settings.OUTPUT_DIR)
    dataset = read_dataset(data_path)
    vectors, note_dim = note_vectors(dataset, config)

    runs = run_training(dataset, config, vectors, note_dim, workers=workers)

    summary = []
    for run in runs:
        i = run.fold.index
        checkpoint = run.network.save(out / f"fold{i}.npz", run.meta(config))
        trace = run.result.write_trace(out / f"trace_fold{i}.csv")
        summary.append({
            "fold": i,
            "iterations": len(run.result.trace),
            "final_loss": run.result.final_loss,
            "checkpoint": str(checkpoint),
            "trace": str(trace),
        })
        click.echo(f"fold {i}: {len(run.result.trace)} iterations, final loss {run.result.final_loss}")
    write_json({"report_version": 1, "folds": summary}, out / "train_summary.json")
