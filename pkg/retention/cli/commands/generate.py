"""
retention generate: draw a synthetic cohort and write it as a dataset file.
"""
import logging
from typing import Optional

import click

from retention.cli.context import run_config
from retention.cli.middleware.logging_middleware import logged_command
from retention.data.generator import cohort_summary, generate_cohort
from retention.data.io import export_tables_csv, write_dataset

logger = logging.getLogger(__name__)


def format_summary(rows: list) -> str:
    header = f"{'Gender':<8}{'Count':>14}{'Dropout':>16}{'Temporary':>16}{'Permanent':>16}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['gender']:<8}"
            f"{row['count']:>7} ({row['count_share']:>4.0%})"
            f"{row['dropout']:>9} ({row['dropout_rate']:>4.0%})"
            f"{row['temporary']:>9} ({row['temporary_share']:>4.0%})"
            f"{row['permanent']:>9} ({row['permanent_share']:>4.0%})"
        )
    return "\n".join(lines)


@click.command("generate")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Dataset file to write.")
@click.option("--csv-dir", type=click.Path(file_okay=False), default=None, help="Also export static/performance CSVs here.")
@click.pass_context
@logged_command
def generate(ctx: click.Context, out_path: str, csv_dir: Optional[str]):
    """Generate a synthetic cohort from the run config's cohort section."""
    config = run_config(ctx)
    dataset = generate_cohort(config.cohort)
    write_dataset(dataset, out_path)
    if csv_dir:
        export_tables_csv(dataset, csv_dir)
    click.echo(format_summary(cohort_summary(dataset)))
    click.echo(f"wrote {len(dataset)} records to {out_path}")
