"""Command-line interface for running and plotting experiments."""
from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click

from .errors import ConfigError, InnodpcError
from .experiments import load_config, preset, run_config

_OUT_ENV = "INNODPC_OUT"


def _default_out(name: str) -> Path:
    base = os.environ.get(_OUT_ENV, "runs")
    return Path(base) / name


@click.group()
def main():
    """Data-driven predictive control experiments."""


def _execute(cfg, out, jobs):
    out = Path(out) if out else _default_out(cfg.name)
    try:
        run_config(cfg, out, jobs=jobs)
    except InnodpcError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out}/results.csv, summary.csv, config.echo, plot.svg")


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(), default=None,
              help=f"Output directory (default: ${_OUT_ENV}/<name>).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for Monte Carlo trials.")
@click.option("--profile", type=click.Choice(["smoke", "full"]), default=None,
              help="Scale override applied when the config names a preset.")
def run(config, out, jobs, profile):
    """Run the experiment described by a JSON CONFIG file."""
    try:
        cfg = load_config(config, profile=profile)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    _execute(cfg, out, jobs)


@main.command()
@click.option("--preset", "preset_name", default="paper-sec5", show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--profile", type=click.Choice(["smoke", "full"]),
              default="smoke", show_default=True)
def fig1(preset_name, out, jobs, profile):
    """Control cost and subspace angle across ARX orders."""
    name = "paper-sec5-fig1" if preset_name == "paper-sec5" else preset_name
    try:
        cfg = preset(name, profile=profile)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    _execute(cfg, out, jobs)


@main.command()
@click.option("--preset", "preset_name", default="paper-sec5", show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--profile", type=click.Choice(["smoke", "full"]),
              default="smoke", show_default=True)
def fig2(preset_name, out, jobs, profile):
    """Null-space estimation angle across training lengths."""
    name = "paper-sec5-fig2" if preset_name == "paper-sec5" else preset_name
    try:
        cfg = preset(name, profile=profile)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    _execute(cfg, out, jobs)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def validate(config):
    """Validate a config file without running it."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(2)
    click.echo(f"ok: {cfg.name} ({cfg.sweep.variable} sweep, "
               f"{cfg.monte_carlo.n_mc} trials)")


@main.command()
@click.argument("results", type=click.Path(exists=True, dir_okay=False))
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              required=True, help="JSON plot specification.")
@click.option("--out", type=click.Path(), default="plot.svg",
              show_default=True)
def plot(results, spec_path, out):
    """Render a CSV table (results or summary) to an SVG chart."""
    from .plotting import emit_plot

    with open(results, newline="") as fh:
        table = list(csv.DictReader(fh))
    spec = json.loads(Path(spec_path).read_text())
    try:
        emit_plot(table, spec, out)
    except InnodpcError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
