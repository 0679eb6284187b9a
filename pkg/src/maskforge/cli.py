"""The forge command line: run the pipeline, compute stats/codes/eval
standalone, and sample or serve the review queue."""

from __future__ import annotations

import logging
import sys

import click

from .config import resolve_config
from .pipeline import Pipeline, StageError
from .references import load_kb
from .review import InsufficientEntities, ReviewStore, read_queue, sample_review_queue, write_queue


def _config_from(ctx: click.Context) -> "PipelineConfig":  # noqa: F821
    return ctx.obj["config"]


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML config path (falls back to $FORGE_CONFIG).")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory override.")
@click.option("--seed", type=int, default=None, help="Sampling seed override.")
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, config_path, out_dir, seed, verbose):
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {}
    if out_dir is not None:
        overrides["out_dir"] = out_dir
    if seed is not None:
        overrides["seed"] = seed
    ctx.ensure_object(dict)
    ctx.obj["config"] = resolve_config(config_path, **overrides)


def _run(ctx, only=None, force=False):
    pipeline = Pipeline(_config_from(ctx))
    try:
        ran = pipeline.run(force=force, only=only)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if ran:
        click.echo("ran: " + ", ".join(ran))
    else:
        click.echo("nothing to do (outputs present)")


@main.command()
@click.option("--force", is_flag=True, default=False, help="Re-run stages even if outputs exist.")
@click.pass_context
def run(ctx, force):
    """Run the full annotation pipeline."""
    _run(ctx, force=force)


@main.command()
@click.option("--force", is_flag=True, default=False)
@click.pass_context
def stats(ctx, force):
    """Recompute the dataset statistics stage."""
    _run(ctx, only="stats", force=force)


@main.command()
@click.option("--force", is_flag=True, default=False)
@click.pass_context
def codes(ctx, force):
    """Build entity codes and the collision report."""
    _run(ctx, only="codes", force=force)


@main.command()
@click.option("--force", is_flag=True, default=False)
@click.pass_context
def eval(ctx, force):
    """Resolve predictions and compute the accuracy report."""
    config = _config_from(ctx)
    if not config.predictions_path:
        click.echo("error: eval requires [eval].predictions in the config", err=True)
        sys.exit(1)
    _run(ctx, only="eval", force=force)


@main.group()
def review():
    """Review-queue sampling and the audit console server."""


@review.command("sample")
@click.option("--sizes", required=True,
              help="Per-split sample sizes, e.g. entity=1400,query=400,wiki=200.")
@click.option("--queue", "queue_path", type=click.Path(), required=True, help="Output queue file.")
@click.pass_context
def review_sample(ctx, sizes, queue_path):
    """Sample the manual-evaluation queue from the assembled dataset."""
    config = _config_from(ctx)
    pipeline = Pipeline(config)
    try:
        parsed = {}
        for part in sizes.split(","):
            split, _, count = part.partition("=")
            parsed[split.strip()] = int(count)
    except ValueError:
        click.echo(f"error: cannot parse sizes {sizes!r}", err=True)
        sys.exit(1)
    kb = load_kb(config.kb_path)
    records = pipeline._assembled_records()
    try:
        queue = sample_review_queue(records, kb, parsed, seed=config.seed)
    except InsufficientEntities as exc:
        click.echo(f"error: {exc} (deficit {exc.deficit})", err=True)
        sys.exit(1)
    write_queue(queue, queue_path)
    click.echo(f"sampled {len(queue)} items -> {queue_path}")


@review.command("serve")
@click.option("--queue", "queue_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_dir", type=click.Path(), required=True)
@click.option("--images", "images_dir", type=click.Path(), default=None)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Frontend asset directory to serve at /.")
@click.option("--port", type=int, default=None)
@click.pass_context
def review_serve(ctx, queue_path, store_dir, images_dir, static_dir, port):
    """Serve the review API (and console when --static is given)."""
    from .review_api import serve

    config = _config_from(ctx)
    store = ReviewStore(read_queue(queue_path), store_dir)
    chosen_port = port if port is not None else config.review_port
    images = images_dir or (config.images_dir or None)
    click.echo(f"review API on http://127.0.0.1:{chosen_port}")
    serve(store, images_dir=images, static_dir=static_dir, port=chosen_port)


if __name__ == "__main__":
    main()
