"""Command-line front end: ``pistonlab <scenario> [options]``."""

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

from pistonlab.config import Settings
from pistonlab.errors import (
    ConfigurationError,
    InvalidInputError,
    PistonLabError,
    UnreliableFitError,
)
from pistonlab.output import FORMATS, Report
from pistonlab.piston import (
    PistonAssembly3D,
    Method,
    crossover_aspect,
    cube_permeable_verdict,
    force_analytic_interval,
    force_analytic_star,
    force_numeric,
    net_piston_force_3d,
    pipeline_energy,
    star_piston_forces,
)
from pistonlab.regular import (
    closed_form_energy_1d,
    cutoff_ladder,
    finite_energy,
    spectrum_for,
    star_shaft_energy,
)
from pistonlab.spectra import BoxSpec, IntervalSpec, StarGraphSpec
from pistonlab.suite import run_suite

cli_logger = logging.getLogger("pistonlab.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

SCENARIOS = ("interval", "star", "box", "piston3d")
# Geometry fields each sweep target reads; for a star, L is the shaft length
SWEEP_PARAMETERS = {
    "interval": ("a",),
    "star": ("a", "n", "L"),
    "box": ("a", "b1", "b2"),
    "piston3d": ("a", "b", "L"),
}


def configure_logging(level: str = "INFO", log_file: str = ""):
    """Send ``pistonlab`` logs to stderr and optionally to a file."""
    logger = logging.getLogger("pistonlab")
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--format", choices=FORMATS, default="table")
    parent.add_argument("--output", help="Write the report here instead of stdout")
    parent.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a setting, e.g. --set ladder_rungs=8",
    )
    parent.add_argument("--config", help="JSON file of setting overrides")
    parent.add_argument(
        "--spectrum-out", help="Write the spectrum in columnar text form"
    )
    parent.add_argument("--omega-max", type=float, help="Ceiling for --spectrum-out")
    return parent


def _add_geometry_options(parser, scenario):
    if scenario == "interval":
        parser.add_argument("--bc", default="DD", help="End conditions, e.g. DN")
        parser.add_argument("--a", type=float, default=1.0)
    elif scenario == "star":
        parser.add_argument("--n", type=int, default=3)
        parser.add_argument("--a", type=float, default=1.0)
        parser.add_argument("--lengths", type=float, nargs="+")
        parser.add_argument(
            "--piston", choices=("neumann", "dirichlet"), default="neumann"
        )
        parser.add_argument("--shaft", type=float, help="Total edge length L")
        parser.add_argument(
            "--root-finder", action="store_true", help="Skip the closed form"
        )
    elif scenario == "box":
        parser.add_argument("--a", type=float, default=1.0)
        parser.add_argument("--b1", type=float, default=1.0)
        parser.add_argument("--b2", type=float, default=1.0)
        parser.add_argument(
            "--wall", choices=("conducting", "permeable"), default="conducting"
        )
        parser.add_argument("--method", choices=("orbit", "modes"))
        parser.add_argument(
            "--cube-verdict", action="store_true", help="Classify the cube at side a"
        )
    elif scenario == "piston3d":
        parser.add_argument("--a", type=float, default=0.1)
        parser.add_argument("--b", type=float, default=1.0)
        parser.add_argument("--L", type=float, default=100.0)
        parser.add_argument("--numeric", action="store_true")
    parser.add_argument("--force", action="store_true", help="Also compute the force")


def build_parser() -> argparse.ArgumentParser:
    parent = _common_options()
    parser = argparse.ArgumentParser(
        prog="pistonlab", description="Casimir piston energies and forces"
    )
    subparsers = parser.add_subparsers(dest="scenario", required=True)
    for scenario in SCENARIOS:
        sub = subparsers.add_parser(scenario, parents=[parent])
        _add_geometry_options(sub, scenario)

    sweep = subparsers.add_parser("sweep", parents=[parent])
    sweep.add_argument("target", choices=SCENARIOS)
    names = sorted({p for params in SWEEP_PARAMETERS.values() for p in params})
    sweep.add_argument("--parameter", required=True, choices=names)
    sweep.add_argument("--grid", required=True, type=float, nargs="+")
    sweep.add_argument("--bc", default="DD")
    sweep.add_argument("--n", type=int, default=3)
    sweep.add_argument("--a", type=float, default=1.0)
    sweep.add_argument("--b", type=float, default=1.0)
    sweep.add_argument("--b1", type=float, default=1.0)
    sweep.add_argument("--b2", type=float, default=1.0)
    sweep.add_argument("--L", type=float, default=100.0)
    sweep.add_argument("--piston", choices=("neumann", "dirichlet"), default="neumann")
    sweep.add_argument(
        "--wall", choices=("conducting", "permeable"), default="conducting"
    )
    sweep.add_argument("--method", choices=("orbit", "modes"))
    sweep.add_argument("--numeric", action="store_true")
    sweep.add_argument("--force", action="store_true")

    subparsers.add_parser("paper-suite", parents=[parent])
    return parser


def load_settings(args, environ=None) -> Settings:
    """Defaults < environment < --config file < --set overrides."""
    settings = Settings.from_env(environ)
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                overrides = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read config {args.config}: {e}") from e
        if not isinstance(overrides, dict):
            raise ConfigurationError("Config file must hold a JSON object")
        settings = settings.with_overrides(overrides)
    pairs = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"Expected KEY=VALUE, got {item!r}")
        pairs[key.strip()] = value.strip()
    return settings.with_overrides(pairs)


def _fit_row(fit):
    return {"energy": fit.finite_part, **fit.as_record()}


def _force_row(report, prefix="force"):
    record = report.as_record()
    row = {prefix: record.pop("force")}
    row.update({f"{prefix}_{k}": v for k, v in record.items()})
    return row


def _interval_spec(args):
    bc = args.bc.upper()
    if len(bc) != 2:
        raise InvalidInputError(f"--bc takes two letters, got {args.bc!r}")
    return IntervalSpec(args.a, bc[0], bc[1])


def _star_spec(args):
    if args.lengths:
        return StarGraphSpec(tuple(args.lengths), args.piston)
    return StarGraphSpec.equal(args.n, args.a, args.piston)


def _box_spec(args):
    return BoxSpec(args.a, args.b1, args.b2, args.wall)


def run_interval(args, settings: Settings, report: Report):
    spec = _interval_spec(args)
    fit = finite_energy(spec, settings)
    row = {"geometry": spec.tag, "a": spec.a, **_fit_row(fit)}
    row["analytic_energy"] = closed_form_energy_1d(spec)
    if args.force:
        analytic = force_analytic_interval(spec, settings).force
        force = force_numeric(
            pipeline_energy(lambda x: IntervalSpec(x, spec.left, spec.right), settings),
            spec.a,
            analytic=analytic,
            settings=settings,
        )
        row.update(_force_row(force))
        row["analytic_force"] = analytic
    report.add(row)
    return spec


def run_star(args, settings: Settings, report: Report):
    spec = _star_spec(args)
    closed_form = False if args.root_finder else None
    if args.shaft:
        fit = star_shaft_energy(spec, args.shaft, settings, closed_form)
    else:
        fit = finite_energy(spec, settings, closed_form=closed_form)
    row = {"geometry": spec.tag, "n": spec.n, **_fit_row(fit)}
    if args.force and spec.equal_lengths:
        a = spec.edge_lengths[0]
        analytic = force_analytic_star(spec.n, a, spec.piston_condition, settings)
        force = force_numeric(
            pipeline_energy(
                lambda x: StarGraphSpec.equal(spec.n, x, spec.piston_condition),
                settings,
                closed_form=closed_form,
            ),
            a,
            analytic=analytic.force,
            settings=settings,
        )
        row.update(_force_row(force))
        row["analytic_force"] = analytic.force
    report.add(row)
    if args.force and not spec.equal_lengths:
        for piston in star_piston_forces(spec, settings):
            report.add({"geometry": spec.tag, **_force_row(piston)})
    return spec


def run_box(args, settings: Settings, report: Report):
    spec = _box_spec(args)
    method = args.method or settings.box_method
    fit = finite_energy(spec, settings, method=method)
    row = {"geometry": spec.tag, **_fit_row(fit)}
    if args.force:
        force = force_numeric(
            pipeline_energy(
                lambda x: BoxSpec(x, spec.b1, spec.b2, spec.wall_model),
                settings,
                method=method,
            ),
            spec.a,
            settings=settings,
        )
        row.update(_force_row(force))
        row["pressure"] = force.force / (spec.b1 * spec.b2)
    report.add(row)
    if getattr(args, "cube_verdict", False):
        verdict = cube_permeable_verdict(spec.a, settings)
        report.diagnostics.update(verdict.as_record())
    return spec


def run_piston3d(args, settings: Settings, report: Report):
    assembly = PistonAssembly3D(args.a, args.b, args.L)
    method = Method.NUMERIC if args.numeric else Method.ANALYTIC
    force = net_piston_force_3d(assembly, method, settings)
    row = {"a": assembly.a, "b": assembly.b, "L": assembly.L}
    row.update(_force_row(force, "net_force"))
    report.add(row)
    report.diagnostics["crossover_aspect"] = crossover_aspect()
    return None


RUNNERS = {
    "interval": run_interval,
    "star": run_star,
    "box": run_box,
    "piston3d": run_piston3d,
}


def _mark_reliability(report: Report):
    for row in report.results:
        for key, value in row.items():
            if (key == "reliable" or key.endswith("_reliable")) and value is False:
                report.failed = True


def run_scenario(args, settings: Settings) -> Report:
    """
    Execute one scenario and collect its report.

    Numerical failures are recorded in the diagnostics and mark the report
    failed; invalid geometry is raised to the caller.
    """
    report = Report(scenario=args.scenario, inputs=_inputs(args))
    if args.scenario == "paper-suite":
        checks = run_suite(settings)
        for check in checks:
            report.add(check.as_record())
        report.diagnostics["passed"] = sum(c.passed for c in checks)
        report.diagnostics["failed"] = sum(not c.passed for c in checks)
        report.failed = any(not c.passed for c in checks)
        return report
    if args.scenario == "sweep":
        return sweep(args, args.parameter, args.grid, settings)

    try:
        geometry = RUNNERS[args.scenario](args, settings, report)
    except UnreliableFitError as e:
        cli_logger.error("Unreliable fit: %s", e)
        report.diagnostics.update(error=str(e), **_flatten(e.diagnostics))
        report.failed = True
        return report
    except InvalidInputError:
        raise
    except PistonLabError as e:
        cli_logger.error("Numerical failure: %s", e)
        report.diagnostics["error"] = str(e)
        report.failed = True
        return report
    _mark_reliability(report)
    if geometry is not None and args.spectrum_out:
        _write_spectrum(geometry, args, settings)
    return report


def _flatten(diagnostics):
    return {
        str(k): (" ".join(f"{x:.12g}" for x in v) if isinstance(v, tuple) else v)
        for k, v in (diagnostics or {}).items()
    }


def _write_spectrum(geometry, args, settings):
    if args.omega_max:
        spectrum = geometry.spectrum(args.omega_max, settings)
    else:
        ladder = cutoff_ladder(geometry, settings)
        spectrum = spectrum_for(geometry, min(ladder), settings=settings)
    with open(args.spectrum_out, "w", encoding="utf-8") as f:
        f.write(spectrum.to_text())
    cli_logger.info("Wrote %d frequencies to %s", len(spectrum), args.spectrum_out)


def _inputs(args):
    skip = {"format", "output", "overrides", "config", "spectrum_out", "omega_max"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _grid_point(args, parameter, value):
    point = copy.copy(args)
    point.scenario = args.target
    point.spectrum_out = None
    point.cube_verdict = False
    point.root_finder = False
    point.lengths = None
    point.shaft = None
    if parameter == "n":
        if value != int(value):
            raise InvalidInputError(f"Edge count must be an integer, got {value!r}")
        value = int(value)
    if point.scenario == "star" and parameter == "L":
        point.shaft = value
    else:
        setattr(point, parameter, value)
    return point


def sweep(args, parameter: str, grid: Sequence[float], settings: Settings) -> Report:
    """
    Run ``args.target`` once per grid value of ``parameter``.

    Rows keep the grid order; a failing point is marked and the sweep goes on.
    """
    allowed = SWEEP_PARAMETERS[args.target]
    if parameter not in allowed:
        raise InvalidInputError(
            f"{args.target} has no parameter {parameter!r}; choose from "
            f"{', '.join(allowed)}"
        )
    report = Report(scenario="sweep", inputs=_inputs(args))

    def run_point(value):
        point = _grid_point(args, parameter, value)
        single = Report(scenario=point.scenario)
        try:
            RUNNERS[point.scenario](point, settings, single)
        except PistonLabError as e:
            cli_logger.error("Sweep point %s=%g failed: %s", parameter, value, e)
            return [{parameter: value, "status": "failed", "error": str(e)}]
        _mark_reliability(single)
        status = "failed" if single.failed else "ok"
        return [{parameter: value, "status": status, **row} for row in single.results]

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            blocks = list(pool.map(run_point, grid))
    else:
        blocks = [run_point(value) for value in grid]
    for block in blocks:
        for row in block:
            report.add(row)
            if row["status"] == "failed":
                report.failed = True
    return report


def emit(report: Report, fmt: str, output: Optional[str] = None):
    text = report.render(fmt)
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text)
        cli_logger.info("Report written to %s", output)
    else:
        sys.stdout.write(text)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args)
    except ConfigurationError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"pistonlab: error: {e}\n")
        return EXIT_USAGE
    configure_logging(settings.log_level, settings.log_file)

    try:
        report = run_scenario(args, settings)
    except InvalidInputError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"pistonlab: error: {e}\n")
        return EXIT_USAGE
    emit(report, args.format, args.output)
    return EXIT_FAILURE if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
