"""Command line entry point: ``abgauge run|verify|export-fields``.

Exit codes: 0 all checks passed, 1 a check failed, 2 the scenario (or an
option) is malformed.
"""

import os
from pathlib import Path
import sys
import time

import click

from .scenario import (ScenarioError, canonical_scenario, export_fields, load_scenario,
                       report_json, report_text, run_scenario)

REPORT_DIR_ENV = "ABGAUGE_REPORT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_SCHEMA = 0, 1, 2


def _report_dir(out):
    if out:
        return Path(out)
    return Path(os.environ.get(REPORT_DIR_ENV) or "abgauge-reports")


def _fail_schema(exc):
    click.echo(f"scenario error: {exc}", err=True)
    sys.exit(EXIT_SCHEMA)


def _execute(sc, out, tolerance_scale, grid_n, strength, quiet):
    def log(name, passed, elapsed):
        if not quiet:
            click.echo(f"  {'PASS' if passed else 'FAIL'}  {name}  ({elapsed:.1f} s)")

    start = time.perf_counter()
    try:
        report = run_scenario(sc, tolerance_scale, grid_n, strength, log)
    except ScenarioError as exc:
        _fail_schema(exc)
    folder = _report_dir(out)
    folder.mkdir(parents=True, exist_ok=True)
    (folder / f"{sc.name}.json").write_text(report_json(report))
    text = report_text(report)
    (folder / f"{sc.name}.txt").write_text(text)
    if not quiet:
        click.echo("")
        click.echo(text, nl=False)
        click.echo(f"reports written to {folder}  ({time.perf_counter() - start:.1f} s)")
    sys.exit(EXIT_OK if report["summary"]["ok"] else EXIT_FAIL)


def _common(fn):
    fn = click.option("--quiet", is_flag=True, help="Print nothing; rely on the exit code.")(fn)
    fn = click.option("--strength", type=float, default=None,
                      help="Override the coupling g of every source.")(fn)
    fn = click.option("--grid-n", type=int, default=None,
                      help="Mode-grid extent N (2N points per axis).")(fn)
    fn = click.option("--tolerance-scale", type=float, default=1.0, show_default=True,
                      help="Multiply every check tolerance.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help=f"Report directory (default: ${REPORT_DIR_ENV} or ./abgauge-reports).")(fn)
    return fn


@click.group()
@click.version_option(package_name="abgauge")
def main():
    """Gauge-dependence checks for Aharonov-Bohm phases and photon-mode energies."""


@main.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@_common
def run(scenario, out, tolerance_scale, grid_n, strength, quiet):
    """Run the checks listed in a SCENARIO file."""
    try:
        sc = load_scenario(scenario)
    except ScenarioError as exc:
        _fail_schema(exc)
    _execute(sc, out, tolerance_scale, grid_n, strength, quiet)


@main.command()
@_common
def verify(out, tolerance_scale, grid_n, strength, quiet):
    """Run the built-in canonical scenario end to end."""
    _execute(canonical_scenario(), out, tolerance_scale, grid_n, strength, quiet)


@main.command("export-fields")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help=f"Output directory (default: ${REPORT_DIR_ENV} or ./abgauge-reports).")
@click.option("--shape", nargs=3, type=int, default=None, help="Probe counts along x, y, z.")
@click.option("--gauge", "gauges", multiple=True, help="Gauge to export; repeatable.")
@click.option("--quiet", is_flag=True)
def export_fields_cmd(scenario, out, shape, gauges, quiet):
    """Write A and B on the scenario's probe box as CSV."""
    try:
        sc = load_scenario(scenario)
        folder = _report_dir(out)
        folder.mkdir(parents=True, exist_ok=True)
        target = folder / f"{sc.name}-fields.csv"
        rows = export_fields(sc, target, shape=list(shape) if shape else None,
                             gauges=list(gauges) or None)
    except ScenarioError as exc:
        _fail_schema(exc)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(EXIT_FAIL)
    if not quiet:
        click.echo(f"wrote {rows} rows to {target}")
