"""Command-line entry points.

Everything is driven by one declarative JSON config (see README). Stage
subcommands (`partition`, `synthesize`, `score`, `select`) run the pipeline
up to that stage for one iteration and are safe to re-run: completed stages
load their artifacts instead of recomputing.
"""

from __future__ import annotations

import json
import logging
import sys
import threading
from pathlib import Path

import click

from .clustering import read_decision, validate_decision, write_decision
from .config import RunConfig
from .corpus import load_problems
from .evaluation import EmReport, evaluate, report_table
from .gateway import Gateway
from .pipeline import Pipeline, ReviewPending, RunLock
from .review_service import create_app, default_frontend_dir, _load_clusters

log = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(path: str) -> RunConfig:
    return RunConfig.from_file(path)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Error-driven training data synthesis and selection pipeline."""
    _setup_logging(verbose)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--auto-approve", is_flag=True, help="Pass review gates with empty decisions.")
@click.option("--serve-review", type=int, default=None, metavar="PORT",
              help="Serve the review API (and UI, if built) while the run blocks.")
def run(config_path: str, auto_approve: bool, serve_review: int | None) -> None:
    """Run the full pipeline (all iterations plus training schedule)."""
    config = _load_config(config_path)
    if auto_approve:
        config.auto_approve = True
    if serve_review is not None:
        _start_review_service(config, serve_review)
    pipeline = Pipeline(config)
    try:
        report = pipeline.run_pipeline()
    except ReviewPending as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(report, indent=2, sort_keys=True))


def _start_review_service(config: RunConfig, port: int) -> None:
    import uvicorn

    app = create_app(config, frontend_dir=default_frontend_dir())
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    click.echo(f"review service on http://127.0.0.1:{port}")


def _stage_command(config_path: str, iteration: int | None, stop_after: str | None) -> None:
    config = _load_config(config_path)
    pipeline = Pipeline(config)
    with RunLock(pipeline.run_dir):
        k = iteration if iteration is not None else pipeline.next_incomplete_iteration()
        if k is None:
            click.echo("all iterations complete")
            return
        handle = pipeline.handle_for_iteration(k)
        try:
            pipeline.run_iteration(k, handle, stop_after=stop_after)
        except ReviewPending as exc:
            raise click.ClickException(str(exc)) from exc
    stage = stop_after or "iteration"
    click.echo(f"{stage} complete for iteration {k} in {pipeline.run_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None)
def iterate(config_path: str, iteration: int | None) -> None:
    """Run one full iteration (the next incomplete one by default)."""
    _stage_command(config_path, iteration, None)


@main.command("partition")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None)
def partition_cmd(config_path: str, iteration: int | None) -> None:
    """Partition the training corpora into good and bad cases."""
    _stage_command(config_path, iteration, "partition")


@main.command("synthesize")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None)
def synthesize_cmd(config_path: str, iteration: int | None) -> None:
    """Generate and dedup-filter error-type-specific data."""
    _stage_command(config_path, iteration, "synthesis")


@main.command("score")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None)
def score_cmd(config_path: str, iteration: int | None) -> None:
    """One-shot-learning score every kept sample against the dev set."""
    _stage_command(config_path, iteration, "scores")


@main.command("select")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None)
def select_cmd(config_path: str, iteration: int | None) -> None:
    """Rank scored samples and write the per-part selection."""
    _stage_command(config_path, iteration, "selection")


@main.command("evaluate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--model", "endpoint", default=None, help="Override target endpoint.")
@click.option("--model-name", default=None, help="Override target model name.")
@click.option("--dataset", "datasets", multiple=True,
              help="Part name (uses its test set) or path:format of a test file.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate_cmd(config_path, endpoint, model_name, datasets, out_path) -> None:
    """Zero-shot exact-match evaluation of a model over test sets."""
    config = _load_config(config_path)
    handle = config.target_handle().with_decoding(0.0, 2048)
    if endpoint:
        handle = handle.with_endpoint(endpoint, model_name)
    gateway = Gateway(
        cache_dir=config.resolved_cache_dir(),
        concurrency=config.concurrency,
        context_budget_chars=config.context_budget_chars,
    )
    pipeline = Pipeline(config, gateway)
    testsets = []
    names = list(datasets) or [p.name for p in config.parts]
    for name in names:
        if ":" in name and Path(name.split(":", 1)[0]).exists():
            path, fmt = name.split(":", 1)
            testsets.append(load_problems(path, fmt, split="test", role="test"))
            continue
        test = pipeline.test_set(name)
        if test is None:
            raise click.ClickException(f"part {name!r} has no test_path configured")
        testsets.append(test)
    if not testsets:
        raise click.ClickException("nothing to evaluate")
    entries = [
        evaluate(gateway, handle, testset,
                 transcript_path=pipeline.run_dir / f"eval-transcript-{testset.name}.jsonl")
        for testset in testsets
    ]
    report = EmReport(model_name=handle.model_name, entries=entries)
    text = report_table([report], out_path)
    click.echo(text)


@main.group()
def review() -> None:
    """Human review of error clusters."""


@review.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8410)
def review_serve(config_path: str, host: str, port: int) -> None:
    """Serve the review API and (if built) the browser UI."""
    import uvicorn

    config = _load_config(config_path)
    app = create_app(config, frontend_dir=default_frontend_dir())
    uvicorn.run(app, host=host, port=port)


@review.command("apply")
@click.argument("decision_file", type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--iteration", type=int, default=None,
              help="Iteration to apply to (default: the pending one).")
def review_apply(decision_file: str, config_path: str, iteration: int | None) -> None:
    """Validate a decision file and install it, releasing the review gate."""
    config = _load_config(config_path)
    pipeline = Pipeline(config)
    k = iteration if iteration is not None else pipeline.pending_review_iteration()
    if k is None:
        raise click.ClickException("no iteration is awaiting review")
    clusters = _load_clusters(pipeline, k)
    if not clusters:
        raise click.ClickException(f"iteration {k} has no clusters to review")
    decision = read_decision(decision_file)
    diagnostics = validate_decision(clusters, decision)
    if diagnostics:
        for i, message in diagnostics:
            click.echo(f"action {i}: {message}", err=True)
        raise click.ClickException("decision file failed validation")
    path = pipeline.review_path(k)
    write_decision(decision, path)
    click.echo(f"review installed at {path}; gate released")


if __name__ == "__main__":
    main()
