"""Command-line entry points.

The CLI stays thin: subcommands parse arguments and dispatch into the
library (batch runs, oracle suites) or start the service host. Exit codes:
0 success, 2 invalid scenario or bad input, 3 oracle-suite failure.
"""

from __future__ import annotations

import pathlib
import sys

import click

from . import checks, kinematics, scenarios, sim


def _resolve_scenario(ref: str) -> sim.Scenario:
    path = pathlib.Path(ref)
    if path.exists():
        return sim.load_scenario(path)
    if ref in scenarios.BUILDERS:
        return scenarios.load_bundled(ref)
    raise sim.ScenarioInvalid("$file", f"{ref!r} is neither a file nor a bundled scenario {scenarios.names()}")


@click.group()
def main():
    """Teleoperation retargeting + MPC toolkit."""


@main.command()
@click.option("--scenario", "scenario_ref", required=True,
              help="Scenario JSON path or bundled name (idle, mirror, roll, saturation).")
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False),
              help="CSV log output path.")
@click.option("--json-log", "json_log", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON-lines log mirror.")
def run(scenario_ref: str, out_csv: str, json_log: str | None):
    """Run a scenario through the closed-loop simulator and write logs."""
    try:
        scenario = _resolve_scenario(scenario_ref)
        records = sim.run_scenario(scenario)
    except sim.ScenarioInvalid as exc:
        click.echo(f"invalid scenario: {exc}", err=True)
        sys.exit(2)
    sim.write_csv(records, out_csv)
    if json_log:
        sim.write_jsonl(records, json_log)
    solves = [r.solve_ms for r in records]
    click.echo(
        f"{scenario.name}: {len(records)} ticks, median solve "
        f"{sorted(solves)[len(solves) // 2]:.2f} ms, log -> {out_csv}"
    )


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--scenario", "scenario_ref", default="idle", show_default=True,
              help="Scenario providing robot/planner/retargeting config for the live session.")
@click.option("--log-dir", type=click.Path(file_okay=False), default=None,
              help="Write session CSV log and message trace here on shutdown.")
@click.option("--static-dir", type=click.Path(file_okay=False), default=None,
              help="Serve a built UI from this directory (default: ./frontend/dist if present).")
def serve(port: int, host: str, scenario_ref: str, log_dir: str | None, static_dir: str | None):
    """Host a live teleoperation session over HTTP + websocket."""
    import uvicorn

    from .service import create_app

    try:
        scenario = _resolve_scenario(scenario_ref)
    except sim.ScenarioInvalid as exc:
        click.echo(f"invalid scenario: {exc}", err=True)
        sys.exit(2)
    if static_dir is None:
        default_static = pathlib.Path("frontend") / "dist"
        static_dir = str(default_static) if default_static.is_dir() else None
    app = create_app(scenario, log_dir=log_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--suite", required=True, type=click.Choice(sorted(checks.SUITES)))
def check(suite: str):
    """Run an oracle suite; exits 3 on failure."""
    result = checks.run_suite(suite)
    status = "PASS" if result.passed else "FAIL"
    click.echo(f"[{status}] {result.name}: {result.detail}")
    if not result.passed:
        sys.exit(3)


@main.command()
def presets():
    """List built-in robot models."""
    for name in sorted(kinematics.PRESETS):
        model = kinematics.preset(name)
        click.echo(f"{name}: 6-dof, reach {kinematics.max_reach(model):.4f} m")


if __name__ == "__main__":
    main()
