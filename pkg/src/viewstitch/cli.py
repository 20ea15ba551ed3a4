"""Command-line front end: run samplers, dump schedules, run ablation grids,
and render waterfall images. All randomness flows from the config seed."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .artifacts import read_sequence, write_pgm
from .config import (dump_schedule_from_config, grid_from_config,
                     run_from_config, validate_config)
from .errors import ViewStitchError
from .experiments import SAMPLERS, grid_rows_to_csv, run_grid


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"invalid JSON in {path}: {exc}")


@click.group()
def main():
    """Camera-guided sequence sampling in an analytic verification world."""


@main.command("gen")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--sampler", type=click.Choice(SAMPLERS), default=None,
              help="Override the config sampler.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".")
@click.option("--jobs", type=int, default=1, help="Window evaluation concurrency.")
def cmd_gen(config_path, seed, sampler, output_dir, jobs):
    """Run one sampler; writes sequence dump, metadata, and metric report."""
    config = _load_json(config_path)
    try:
        paths = run_from_config(config, output_dir, seed=seed, sampler=sampler, jobs=jobs)
    except ViewStitchError as exc:
        raise click.ClickException(str(exc))
    report = paths["report"]
    click.echo(f"sequence: {paths['sequence']}")
    click.echo(f"f2fc={report.f2fc:.6g} "
               f"lrc={'NA' if report.lrc is None else format(report.lrc, '.6g')} "
               f"hf_energy={report.hf_energy:.6g}")


@main.command("ablate")
@click.option("--grid", "grid_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", type=click.Path(file_okay=False), default=".")
@click.option("--jobs", type=int, default=1)
def cmd_ablate(grid_path, output_dir, jobs):
    """Run an ablation grid and write one CSV row per (cell, seed)."""
    spec = _load_json(grid_path)
    try:
        grid = grid_from_config(spec)
        rows, failures = run_grid(grid, jobs=jobs)
    except ViewStitchError as exc:
        raise click.ClickException(str(exc))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / (Path(grid_path).stem + ".csv")
    csv_path.write_text(grid_rows_to_csv(rows))
    click.echo(f"wrote {csv_path} ({len(rows)} rows)")
    if failures:
        for idx, cell, err in failures:
            click.echo(f"cell {idx} failed: {cell} -> {err}", err=True)
        sys.exit(1)


@main.command("schedule-dump")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", type=click.Path(file_okay=False), default=".")
def cmd_schedule_dump(config_path, output_dir):
    """Write the trajectory poses and window schedule as JSON."""
    config = _load_json(config_path)
    try:
        path = dump_schedule_from_config(config, output_dir)
    except ViewStitchError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"schedule: {path}")


@main.command("render")
@click.argument("sequence", type=click.Path(exists=True, dir_okay=False))
@click.option("--sidecar", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Sidecar JSON (defaults to the sequence path with .json).")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def cmd_render(sequence, sidecar, output):
    """Render a sequence dump as a grayscale waterfall PGM (time x ray)."""
    seq_path = Path(sequence)
    sidecar = Path(sidecar) if sidecar else seq_path.with_suffix(".json")
    out = Path(output) if output else seq_path.with_suffix(".pgm")
    try:
        video = read_sequence(seq_path, sidecar)
        write_pgm(out, video)
    except (ViewStitchError, FileNotFoundError, KeyError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"waterfall: {out}")


@main.command("validate")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def cmd_validate(config_path):
    """Validate a run config without executing it."""
    try:
        validate_config(_load_json(config_path))
    except ViewStitchError as exc:
        raise click.ClickException(str(exc))
    click.echo("config ok")


if __name__ == "__main__":
    main()
