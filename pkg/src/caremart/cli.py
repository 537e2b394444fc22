"""Command-line entry point.

Exit codes: 0 success, 1 validation or threshold failure, 2 I/O error.
"""

from __future__ import annotations

import functools
import json
import sys

import click

from . import __version__, orchestrator
from .cohort import load_definition
from .config import load_config
from .errors import CaremartError, ConfigError, StageOrderError, ValidationError
from .qa import render_report


def _resolve_config(ctx: click.Context):
    params = ctx.obj
    cfg = load_config(params.get("config"))
    if params.get("store"):
        cfg = cfg.model_copy(update={"store_root": params["store"]})
    if params.get("seed") is not None:
        cfg = cfg.model_copy(update={"gen": dict(cfg.gen, seed=params["seed"])})
    return cfg


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValidationError, StageOrderError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except CaremartError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(2)

    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file (default ./caremart.json).")
@click.option("--store", default=None, help="Override the store root directory.")
@click.option("--seed", type=int, default=None, help="Override the generator seed.")
@click.pass_context
def main(ctx: click.Context, config, store, seed) -> None:
    """Clinical datamart pipeline: generate, load, map, check, extract."""
    ctx.obj = {"config": config, "store": store, "seed": seed}


@main.command()
@click.pass_context
@_handle_errors
def gen(ctx: click.Context) -> None:
    """Generate the synthetic raw tables and ground-truth manifest."""
    cfg = _resolve_config(ctx)
    manifest = orchestrator.stage_gen(cfg)
    for table, count in sorted(manifest.expected_raw_counts.items()):
        click.echo(f"raw.{table}: {count} rows")
    click.echo(f"manifest: {cfg.store_root}/manifest.json")


@main.command()
@click.pass_context
@_handle_errors
def ingest(ctx: click.Context) -> None:
    """Load the vocabulary into cdm.concept and cdm.concept_relationship."""
    cfg = _resolve_config(ctx)
    counts = orchestrator.stage_ingest(cfg)
    for table, count in counts.items():
        click.echo(f"cdm.{table}: {count} rows")


@main.command()
@click.pass_context
@_handle_errors
def etl(ctx: click.Context) -> None:
    """Transform raw tables into the CDM namespace."""
    cfg = _resolve_config(ctx)
    report = orchestrator.stage_etl(cfg)
    for table, tr in report.tables.items():
        click.echo(f"{table}: {tr.raw_count} raw -> {tr.cdm_count} cdm "
                   f"({len(tr.excluded)} excluded)")


@main.command()
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]),
              default="text", show_default=True)
@click.option("--limit", "limit_opts", multiple=True, metavar="COMPARISON=PCT",
              help="Per-comparison loss limit override; repeatable.")
@click.pass_context
@_handle_errors
def qa(ctx: click.Context, fmt: str, limit_opts) -> None:
    """Reconcile raw vs cdm record counts and check loss thresholds."""
    cfg = _resolve_config(ctx)
    limits = dict(cfg.qa_limits)
    for opt in limit_opts:
        name, _, pct = opt.rpartition("=")
        if not name:
            raise ValidationError(f"bad --limit value {opt!r}, expected COMPARISON=PCT")
        limits[name] = float(pct)
    report, passed, violations = orchestrator.stage_qa(cfg, limits)
    click.echo(render_report(report, fmt), nl=False)
    if not passed:
        for v in violations:
            click.echo(f"threshold: {v}", err=True)
        sys.exit(1)


@main.command()
@click.option("--workers", type=int, default=None, help="Worker thread count override.")
@click.option("--resume", is_flag=True, help="Resume from the last checkpoint.")
@click.pass_context
@_handle_errors
def nlp(ctx: click.Context, workers, resume) -> None:
    """Extract dictionary concept mentions from cdm notes."""
    cfg = _resolve_config(ctx)
    metrics = orchestrator.stage_nlp(cfg, worker_count=workers, resume=resume)
    click.echo(
        f"{metrics.notes_processed} notes, {metrics.concepts_emitted} mentions, "
        f"{metrics.notes_per_second:.0f} notes/s"
    )


@main.command()
@click.pass_context
@_handle_errors
def characterize(ctx: click.Context) -> None:
    """Compute summary statistics into results.stat_record."""
    cfg = _resolve_config(ctx)
    records = orchestrator.stage_characterize(cfg)
    click.echo(f"{len(records)} stat records written")


@main.group()
def cohort() -> None:
    """Cohort definition operations."""


@cohort.command("run")
@click.option("-f", "--definition", "definition_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--id", "definition_id", type=int, default=1, show_default=True)
@click.option("--check-oracle", is_flag=True,
              help="Cross-check the result against the naive per-person scan.")
@click.pass_context
@_handle_errors
def cohort_run(ctx: click.Context, definition_path, definition_id, check_oracle) -> None:
    """Generate a cohort from a definition file and print attrition."""
    cfg = _resolve_config(ctx)
    definition = load_definition(definition_path, definition_id)
    rows, attrition = orchestrator.stage_cohort_run(cfg, definition, check_oracle)
    click.echo(f"subjects: {len({r['subject_id'] for r in rows})}")
    click.echo(json.dumps(attrition.to_dict(), indent=2))


@main.command()
@click.option("--port", type=int, default=None, help="Listen port override.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.pass_context
@_handle_errors
def serve(ctx: click.Context, port, host) -> None:
    """Run the HTTP service (cohort explorer API + static UI)."""
    import uvicorn

    from .server import create_app

    cfg = _resolve_config(ctx)
    uvicorn.run(create_app(cfg), host=host, port=port if port is not None else cfg.port)


@main.group()
def config() -> None:
    """Configuration inspection."""


@config.command("show")
@click.pass_context
@_handle_errors
def config_show(ctx: click.Context) -> None:
    """Print the fully resolved configuration as JSON."""
    cfg = _resolve_config(ctx)
    click.echo(json.dumps(cfg.model_dump(), indent=2))


if __name__ == "__main__":
    main()
