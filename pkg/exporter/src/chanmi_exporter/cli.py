import sys

import click

from .exporter import ExportError, ExportJob, export
from .models import ModelError


@click.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--channel", required=True, type=click.Choice(["text", "audio"]))
@click.option("--model", "model_id", required=True,
              help="Registered model identifier (e.g. uniform, gold_oracle).")
@click.option("--labels", required=True,
              help="Comma-separated label names; header order matches exactly.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--split", default="test", show_default=True)
@click.option("--task", default=None,
              help="Task name for the log header; defaults to the corpus file stem.")
def main(corpus, channel, model_id, labels, out, batch_size, split, task):
    """Run a registered classifier over a labeled corpus and write a
    prediction log chanmi can ingest."""
    try:
        job = ExportJob(
            corpus_path=corpus,
            channel=channel,
            model_id=model_id,
            labels=tuple(labels.split(",")),
            out_path=out,
            batch_size=batch_size,
            split=split,
            task_name=task,
        )
        result = export(job)
    except (ExportError, ModelError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if result.skipped_missing_gold:
        click.echo(
            f"warning: skipped {result.skipped_missing_gold} row(s) without a gold label",
            err=True,
        )
    click.echo(f"wrote {result.records_written} records to {result.out_path}")


if __name__ == "__main__":
    main()
