"""Command-line frontend.

Usage::

    python src/main.py simulate --system pendulum.rms --q0 "0.0998,-0.995" --t1 10 --out traj.csv
    python src/main.py check-hj --system freefall.rms --field X --grid "y:-1:0.9:20" --json

Exit codes: 0 success, 1 usage error or unreadable input, 2 numerical or validation failure.
"""

import argparse
import logging
import sys

import numpy as np

from mechanics import analysis, control, dynamics, holonomic, nonholonomic
from mechanics.dynamics import IntegratorConfig, PhaseState
from mechanics.holonomic import HolonomicConstraintSet
from mechanics.nonholonomic import NonholonomicConstraintSet
from parsers.parser_factory import ParserFactory
from utils.config import load_config
from utils.errors import CheckFailedError, ConfigError, MechanicsError, SystemDefinitionError
from utils.integrators import METHODS
from utils.output_writer import (
    format_float,
    format_system,
    write_json,
    write_system_file,
    write_trajectory_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage errors by raising instead of exiting"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def _vector(text, option):
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise UsageError(f"{option} expects comma-separated numbers, got '{text}'") from None


def _assignments(text, option):
    """'x=0,y=1' -> {'x': 0.0, 'y': 1.0}"""
    values = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, value = part.partition("=")
        try:
            if not sep:
                raise ValueError
            values[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"{option} expects name=value pairs, got '{part}'") from None
    return values


def _initial_state(args, system):
    stored = ParserFactory.parse("state", args.state) if args.state else {}
    inline = {"q0": args.q0, "v0": args.v0, "t0": args.t0}
    for key, value in inline.items():
        if value is not None and key in stored:
            raise UsageError(f"--{key} conflicts with '{key}' in {args.state}")
    q0 = _vector(args.q0, "--q0") if args.q0 is not None else stored.get("q0")
    if q0 is None:
        raise UsageError("an initial configuration is required (--q0 or --state)")
    v0 = _vector(args.v0, "--v0") if args.v0 is not None else stored.get("v0")
    if v0 is None:
        v0 = np.zeros(system.n)
    t0 = args.t0 if args.t0 is not None else stored.get("t0", 0.0)
    return PhaseState.create(system, q0, v0, t0)


def _integrator(args, config, t0):
    return IntegratorConfig.from_config(
        config,
        t0=t0,
        t1=args.t1,
        method=args.method,
        dt=args.dt,
        rtol=args.rtol,
        atol=args.atol,
        dt_min=args.dt_min,
        dt_max=args.dt_max,
    )


def _grid(args, system, config):
    specs = [axis for spec in args.grid for axis in spec.split(",") if axis.strip()]
    fixed = _assignments(args.at, "--at") if args.at else {}
    unknown = set(fixed) - set(system.coords)
    if unknown:
        raise UsageError(f"--at names unknown coordinates: {', '.join(sorted(unknown))}")
    return analysis.SampleGrid.parse(
        specs, system.coords, config["analysis"]["grid_points"], fixed=fixed
    )


def _threshold(args, config, name):
    return args.tol if args.tol is not None else float(config["checks"][name])


def _require_unconstrained(system, command):
    if system.holonomic or system.nonholonomic:
        raise SystemDefinitionError(f"{command} does not support constrained systems")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _print_report(report, prefix=""):
    for key, value in report.items():
        if isinstance(value, dict):
            _print_report(value, f"{prefix}{key}.")
        elif isinstance(value, float):
            print(f"{prefix}{key}: {format_float(value)}")
        elif not isinstance(value, list):
            print(f"{prefix}{key}: {value}")


def _emit(args, report, out_json=True):
    if out_json and args.out:
        write_json(report, args.out)
    if args.json:
        write_json(report)
    else:
        _print_report(report)


def _trajectory_summary(command, system, traj):
    report = {
        "command": command,
        "system": system.name,
        "method": traj.method,
        "samples": len(traj),
        "t_final": float(traj.times[-1]) if len(traj) else None,
    }
    if len(traj):
        report["energy_initial"] = float(traj.energy[0])
        report["energy_max_deviation"] = float(np.max(np.abs(traj.energy - traj.energy[0])))
    if traj.phi is not None and traj.phi.size:
        report["max_constraint_residual"] = float(np.max(np.abs(traj.phi)))
    if traj.error:
        report["error"] = traj.error
    return report


# ---------------------------------------------------------------------------
# Integration dispatch
# ---------------------------------------------------------------------------


def _stabilization(args, count):
    if args.stabilization is None:
        return None
    values = _vector(args.stabilization, "--stabilization")
    if len(values) != count:
        raise UsageError(f"--stabilization expects {count} value(s) for this system")
    return values


def _integrate(args, system, config, s0, cfg):
    if system.holonomic:
        settings = config["holonomic"]
        gains = _stabilization(args, 2)
        return holonomic.integrate_holonomic(
            system,
            HolonomicConstraintSet.from_system(system),
            s0,
            cfg,
            tuple(gains if gains is not None else settings["stabilization"]),
            projection_tolerance=settings["input_projection_tolerance"],
            state_tolerance=settings["state_tolerance"],
        )
    if system.nonholonomic:
        settings = config["nonholonomic"]
        gains = _stabilization(args, 1)
        return nonholonomic.integrate_nonholonomic(
            system,
            NonholonomicConstraintSet.from_system(system),
            s0,
            cfg,
            float(gains[0]) if gains is not None else settings["stabilization"],
            state_tolerance=settings["state_tolerance"],
        )
    if args.stabilization is not None:
        raise UsageError("--stabilization needs a constrained system")
    return dynamics.integrate(system, s0, cfg)


def _finish_run(args, command, system, traj):
    if args.out:
        write_trajectory_csv(traj, args.out)
    report = _trajectory_summary(command, system, traj)
    _emit(args, report, out_json=False)
    traj.raise_for_error()
    if args.tol is not None and traj.phi is not None and traj.phi.size:
        worst = float(np.max(np.abs(traj.phi)))
        if worst > args.tol:
            raise CheckFailedError("constraint", worst, args.tol)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args, system, config):
    s0 = _initial_state(args, system)
    traj = _integrate(args, system, config, s0, _integrator(args, config, s0.t))
    return _finish_run(args, "simulate", system, traj)


def cmd_geodesic(args, system, config):
    free = system.replace(potential=None, force=None, work_form=None, holonomic={}, nonholonomic=())
    s0 = _initial_state(args, free)
    traj = dynamics.integrate(free, s0, _integrator(args, config, s0.t))
    return _finish_run(args, "geodesic", free, traj)


def cmd_check_el(args, system, config):
    if args.trajectory:
        traj = ParserFactory.parse("trajectory", args.trajectory, system_name=system.name)
        if traj.coords != system.coords:
            raise SystemDefinitionError(
                f"trajectory coordinates {', '.join(traj.coords)} do not match the system "
                f"({', '.join(system.coords)})"
            )
    else:
        s0 = _initial_state(args, system)
        traj = _integrate(args, system, config, s0, _integrator(args, config, s0.t))
        traj.raise_for_error()
    threshold = _threshold(args, config, "el")
    residual = dynamics.euler_lagrange_residual(system, traj)
    report = {
        "check": "euler-lagrange",
        "samples": len(traj),
        "threshold": threshold,
        "max_residuals": {"el": float(np.max(np.abs(residual)))},
    }
    if args.energy_drift:
        drift = dynamics.energy_drift_check(system, traj)
        report["max_residuals"]["energy_rate"] = float(np.max(np.abs(drift)))
    _emit(args, report)
    for name, value in report["max_residuals"].items():
        if value > threshold:
            raise CheckFailedError(name, value, threshold)
    return EXIT_OK


def cmd_check_hj(args, system, config):
    grid = _grid(args, system, config)
    result = analysis.hj_energy_check(system, args.field, grid)
    threshold = _threshold(args, config, "hj")
    report = result.to_dict(per_point=args.per_point)
    report["threshold"] = threshold
    _emit(args, report)
    residuals = result.max_residuals
    if residuals["hj"] > threshold:
        raise CheckFailedError("hj", residuals["hj"], threshold)
    energy_threshold = threshold * (1.0 + abs(report["energy_mean"]))
    if residuals["energy_deviation"] > energy_threshold:
        raise CheckFailedError("energy-deviation", residuals["energy_deviation"], energy_threshold)
    return EXIT_OK


def cmd_jacobi_compare(args, system, config):
    _require_unconstrained(system, "jacobi-compare")
    s0 = _initial_state(args, system)
    cfg = _integrator(args, config, s0.t)
    E0 = args.E0 if args.E0 is not None else dynamics.total_energy(system, s0)
    distance = analysis.jacobi_compare(
        system, E0, s0, cfg, min_step=config["analysis"]["jacobi_min_step"]
    )
    threshold = _threshold(args, config, "jacobi")
    report = {"check": "jacobi", "E0": float(E0), "threshold": threshold, **distance.to_dict()}
    _emit(args, report)
    if distance.value > threshold:
        raise CheckFailedError("jacobi-trace", distance.value, threshold)
    return EXIT_OK


def cmd_noether(args, system, config):
    s0 = _initial_state(args, system)
    traj = _integrate(args, system, config, s0, _integrator(args, config, s0.t))
    traj.raise_for_error()
    result = analysis.noether_quantity(system, args.field, traj)
    threshold = _threshold(args, config, "noether")
    report = result.to_dict()
    report["threshold"] = threshold
    _emit(args, report)
    if result.relative_drift > threshold:
        raise CheckFailedError("noether", result.relative_drift, threshold)
    return EXIT_OK


def cmd_schrodinger_check(args, system, config):
    grid = _grid(args, system, config)
    sign = args.sign if args.sign is not None else config["analysis"]["schrodinger_sign"]
    result = analysis.schrodinger_triple_check(system, args.scalar, args.E0, grid, sign)
    threshold = _threshold(args, config, "schrodinger")
    failed = result.failed(threshold)
    report = result.to_dict(per_point=args.per_point)
    report.update(threshold=threshold, failed=failed)
    _emit(args, report)
    if failed:
        raise CheckFailedError(failed[0], result.max_residuals[failed[0]], threshold)
    return EXIT_OK


def cmd_euler_fluid(args, system, config):
    grid = _grid(args, system, config)
    result = analysis.stationary_euler_example(system, args.field, grid)
    threshold = _threshold(args, config, "euler_fluid")
    report = result.to_dict(per_point=args.per_point)
    report["threshold"] = threshold
    _emit(args, report)
    for name, value in result.max_residuals.items():
        if value > threshold:
            raise CheckFailedError(name, value, threshold)
    return EXIT_OK


def _control_system(args, system, signal=None):
    if args.inputs:
        inputs = tuple(name.strip() for name in args.inputs.split(","))
    elif signal is not None and set(signal.channels) <= set(system.controls):
        inputs = signal.channels
    else:
        inputs = None
    return control.ControlSystem.from_system(system, signal=signal, inputs=inputs)


def cmd_control_sim(args, system, config):
    _require_unconstrained(system, "control-sim")
    signal = ParserFactory.parse("signal", args.signal)
    csys = _control_system(args, system, signal)
    s0 = _initial_state(args, system)
    traj = control.integrate_control(csys, s0, _integrator(args, config, s0.t))
    return _finish_run(args, "control-sim", system, traj)


def cmd_symmetric_rank(args, system, config):
    settings = config["control"]
    csys = _control_system(args, system)
    if args.q0 is None:
        raise UsageError("symmetric-rank needs the evaluation point (--q0)")
    result = control.symmetric_closure_rank(
        csys,
        _vector(args.q0, "--q0"),
        args.max_depth if args.max_depth is not None else settings["max_depth"],
        include_drift=args.include_drift or settings["include_drift"],
        tol=settings["rank_tolerance"],
        max_generators=settings["max_generators"],
    )
    _emit(args, result.to_dict())
    return EXIT_OK


def cmd_describe(args, system, config):
    if args.out:
        write_system_file(system, args.out)
    if args.json:
        write_json(
            {
                "command": "describe",
                "system": system.name,
                "dim": system.n,
                "coords": list(system.coords),
                "holonomic": list(system.holonomic),
                "nonholonomic": [c.name for c in system.nonholonomic],
                "fields": list(system.fields),
                "scalars": list(system.scalars),
                "controls": list(system.controls),
            }
        )
    else:
        sys.stdout.write(format_system(system))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--system", required=True, help="System definition file")
    p.add_argument("--config", help="Configuration file (default: config.json)")
    p.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="Log level")
    p.add_argument("--json", action="store_true", help="Print the report as JSON")
    p.add_argument("--tol", type=float, help="Failure threshold for the check")


def _add_state(p):
    p.add_argument("--q0", help="Initial configuration, comma-separated")
    p.add_argument("--v0", help="Initial velocity, comma-separated (default: zero)")
    p.add_argument("--t0", type=float, help="Initial time (default: 0)")
    p.add_argument("--state", help="State file with q0/v0/t0 lines")


def _add_integration(p):
    p.add_argument("--t1", type=float, help="Final time")
    p.add_argument("--dt", type=float, help="Step (rk4) or initial step (rk45)")
    p.add_argument("--method", choices=METHODS, help="Integrator")
    p.add_argument("--rtol", type=float, help="Relative tolerance (rk45)")
    p.add_argument("--atol", type=float, help="Absolute tolerance (rk45)")
    p.add_argument("--dt-min", type=float, help="Smallest accepted step (rk45)")
    p.add_argument("--dt-max", type=float, help="Largest step (rk45)")
    p.add_argument(
        "--stabilization", help="Constraint stabilization gains: 'a,b' holonomic, 'k' nonholonomic"
    )


def _add_grid(p):
    p.add_argument(
        "--grid",
        action="append",
        required=True,
        help="Sample axis coord:lo:hi[:count]; repeat or comma-separate for more axes",
    )
    p.add_argument("--at", help="Values of coordinates without an axis, e.g. 'x=0,z=1'")
    p.add_argument("--per-point", action="store_true", help="Include per-point residuals")


def build_parser():
    parser = ArgumentParser(
        prog="mechanics", description="Newtonian mechanics on Riemannian manifolds"
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, handler, help_text, out_help):
        p = commands.add_parser(name, help=help_text, description=help_text)
        _add_common(p)
        p.add_argument("--out", help=out_help)
        p.set_defaults(handler=handler)
        return p

    p = command("simulate", cmd_simulate, "Integrate the equations of motion", "Trajectory CSV")
    _add_state(p)
    _add_integration(p)

    p = command("geodesic", cmd_geodesic, "Integrate a geodesic of the metric", "Trajectory CSV")
    _add_state(p)
    _add_integration(p)

    p = command("check-el", cmd_check_el, "Euler-Lagrange residual of a run", "JSON report")
    _add_state(p)
    _add_integration(p)
    p.add_argument("--trajectory", help="Check a stored trajectory CSV instead of integrating")
    p.add_argument("--energy-drift", action="store_true", help="Also check dE/dt + dL/dt")

    p = command("check-hj", cmd_check_hj, "Hamilton-Jacobi and energy check", "JSON report")
    p.add_argument("--field", required=True, help="Vector field name")
    _add_grid(p)

    p = command(
        "jacobi-compare", cmd_jacobi_compare, "Trajectory vs Jacobi geodesic trace", "JSON report"
    )
    _add_state(p)
    _add_integration(p)
    p.add_argument("--E0", type=float, help="Energy level (default: energy of the initial state)")

    p = command("noether", cmd_noether, "Conservation of g(X, v)", "JSON report")
    p.add_argument("--field", required=True, help="Vector field name")
    _add_state(p)
    _add_integration(p)

    p = command(
        "schrodinger-check", cmd_schrodinger_check, "Schrodinger triple check", "JSON report"
    )
    p.add_argument("--scalar", required=True, help="Scalar field name")
    p.add_argument("--E0", type=float, required=True, help="Energy level")
    p.add_argument("--sign", type=int, choices=(-1, 1), help="X = sign * grad S")
    _add_grid(p)

    p = command("euler-fluid", cmd_euler_fluid, "Stationary Euler flow check", "JSON report")
    p.add_argument("--field", required=True, help="Velocity field name")
    _add_grid(p)

    p = command("control-sim", cmd_control_sim, "Rollout under an input signal", "Trajectory CSV")
    p.add_argument("--signal", required=True, help="Signal CSV with t,u1..uk columns")
    p.add_argument("--inputs", help="Comma-separated control fields (default: signal header)")
    _add_state(p)
    _add_integration(p)

    p = command(
        "symmetric-rank", cmd_symmetric_rank, "Rank of the symmetric closure", "JSON report"
    )
    p.add_argument("--q0", help="Evaluation point, comma-separated")
    p.add_argument("--inputs", help="Comma-separated control fields (default: all)")
    p.add_argument("--max-depth", type=int, help="Deepest nesting of symmetric products")
    p.add_argument("--include-drift", action="store_true", help="Include the drift field")

    command("describe", cmd_describe, "Print the system in canonical form", "System file")

    return parser


def _configure_logging(level, config):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format=config["logging"]["format"],
        stream=sys.stderr,
        force=True,
    )


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_OK

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args.log_level or config["logging"]["level"], config)

    try:
        system = ParserFactory.parse("system", args.system)
        return args.handler(args, system, config)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except MechanicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
