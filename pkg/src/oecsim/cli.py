"""Command-line entry point: run, compare, calibrate, validate."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import yaml

from .broker import DeploymentKind
from .config import ConfigError, load_config
from .harness import compare_deployments, emit_comparison, emit_csv, run_scenario
from .workload import calibrate_service_time, read_coordinate_matrix

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

log = logging.getLogger("oecsim")


class _Fail(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _load(path: str):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise _Fail(EXIT_INVALID, f"invalid config {path}: {exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _parse_kinds(text: str) -> list[DeploymentKind]:
    kinds = []
    for part in text.split(","):
        part = part.strip()
        try:
            kinds.append(DeploymentKind(part))
        except ValueError:
            choices = ", ".join(k.value for k in DeploymentKind)
            raise _Fail(EXIT_INVALID, f"deployments: unknown kind {part!r} (choose from {choices})") from None
    return kinds


def _emit(fn, *args):
    try:
        return fn(*args)
    except OSError as exc:
        where = exc.filename or args[-1]
        raise _Fail(EXIT_IO, f"cannot write {where}: {exc.strerror or exc}") from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Discrete-event simulator for cloud, fog and opportunistic edge deployments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--config", "config_path", required=True, help="Scenario YAML file.")
@click.option("--seed", type=int, default=None, help="Override master_seed.")
@click.option("--runs", type=int, default=None, help="Override the number of runs.")
@click.option("--out", required=True, help="Output directory.")
def run(config_path: str, seed: int | None, runs: int | None, out: str) -> None:
    """Run one scenario and write its CSV files."""
    cfg = _load(config_path)
    changes = {k: v for k, v in (("master_seed", seed), ("runs", runs)) if v is not None}
    try:
        cfg = cfg.replace(**changes).validate()
    except ConfigError as exc:
        raise _Fail(EXIT_INVALID, str(exc)) from None
    report = run_scenario(cfg)
    paths = _emit(emit_csv, report, out)
    s = report.summary
    click.echo(
        f"{s.deployment}: {s.runs} runs, {s.requests} requests, "
        f"upload {s.mean_upload_ms:.3f} ms, processing {s.mean_processing_ms:.3f} ms"
    )
    for p in paths:
        log.info("wrote %s", p)


@cli.command()
@click.option("--config", "config_path", required=True, help="Base scenario YAML file.")
@click.option("--deployments", default="cloud,fog,oec", show_default=True, help="Comma-separated kinds.")
@click.option("--out", required=True, help="Output directory.")
def compare(config_path: str, deployments: str, out: str) -> None:
    """Run the base scenario once per deployment kind."""
    cfg = _load(config_path)
    kinds = _parse_kinds(deployments)
    reports = compare_deployments(cfg, kinds)
    _emit(emit_comparison, reports, out)
    click.echo(f"{'deployment':<12}{'upload_ms':>12}{'processing_ms':>15}{'retries':>9}")
    for rep in reports:
        s = rep.summary
        click.echo(f"{s.deployment:<12}{s.mean_upload_ms:>12.3f}{s.mean_processing_ms:>15.3f}{s.retries:>9}")


@cli.command()
@click.option("--n", "n", type=int, default=147, show_default=True, help="Matrix order.")
@click.option("--reps", type=int, default=20, show_default=True, help="Timed repetitions.")
@click.option("--matrix", default=None, help="Coordinate-format matrix file to time instead of a random one.")
@click.option("--config", "config_path", default=None, help="Write the timings into this scenario file.")
def calibrate(n: int, reps: int, matrix: str | None, config_path: str | None) -> None:
    """Time the LU kernel and report service-time parameters."""
    a = None
    if matrix is not None:
        try:
            a = read_coordinate_matrix(matrix)
        except OSError as exc:
            raise _Fail(EXIT_IO, f"cannot read {matrix}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise _Fail(EXIT_INVALID, str(exc)) from None
        n = a.shape[0]
    try:
        profile = calibrate_service_time(n, reps, matrix=a)
    except ValueError as exc:
        raise _Fail(EXIT_INVALID, str(exc)) from None
    click.echo(f"factorization_time_ms: {profile.factorization_time_ms:.6f}")
    click.echo(f"solve_time_ms: {profile.solve_time_ms:.6f}")
    if config_path is None:
        return
    path = Path(config_path)
    try:
        data = yaml.safe_load(path.read_text()) if path.exists() else {}
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except yaml.YAMLError as exc:
        raise _Fail(EXIT_INVALID, f"invalid config {path}: {exc}") from None
    if not isinstance(data, dict):
        data = {}
    service = data.setdefault("service", {}) or {}
    service["solve_time_ms"] = round(profile.solve_time_ms, 6)
    service["factorization_time_ms"] = round(profile.factorization_time_ms, 6)
    data["service"] = service
    try:
        path.write_text(yaml.safe_dump(data, sort_keys=False))
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None
    click.echo(f"updated {path}")


@cli.command()
@click.option("--config", "config_path", required=True, help="Scenario YAML file.")
def validate(config_path: str) -> None:
    """Check a scenario file and print the resolved configuration."""
    cfg = _load(config_path)
    click.echo(cfg.dump(), nl=False)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="oecsim", standalone_mode=False)
    except _Fail as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except click.ClickException as exc:
        # Bad or missing options count as invalid input.
        exc.show()
        return EXIT_INVALID
    return EXIT_OK


def _entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    _entry()
