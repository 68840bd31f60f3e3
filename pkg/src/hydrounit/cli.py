"""Command-line front end.

Usage::

    hydrounit equilibria --gamma 1.0
    hydrounit stability --grid 0.8 1.0 0.005
    hydrounit simulate --scenario reduced_089 --plot projection3
    hydrounit amplitude --grid 0.80 0.98 0.01 --jobs 4
    hydrounit check

Common options (``--config``, ``--out``, ``--jobs``, ``--seed``) are accepted
by every subcommand.  Every run writes ``manifest.json`` next to its
outputs.  Exit codes: 0 success, 1 usage or config error, 2 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_checks
from .config import config_hash, load_config
from .equilibria import (
    BALANCE_COLUMNS,
    balance_curves,
    balance_rows,
    operating_equilibrium,
    solve_mu0,
)
from .errors import ConfigError, HydroUnitError, NumericError
from .io import PlotSpec, RunManifest, render_svg, write_csv, write_json
from .stability import VERDICT_COLUMNS, stability_sweep, verdict_rows
from .transient import (
    AMPLITUDE_COLUMNS,
    SCENARIOS,
    TRAJECTORY_COLUMNS,
    amplitude_rows,
    amplitude_sweep,
    classify_regime,
    integrate,
    perturbed_start,
    run_scenario,
    trajectory_rows,
)

log = logging.getLogger("hydrounit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(values, default):
    if values is None:
        start, stop, step = default
    else:
        start, stop, step = values
    if step <= 0 or stop < start:
        raise ConfigError("grid needs start <= stop and step > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config overriding the bundled defaults")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--seed", type=int, default=0, help="seed for random perturbations")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="hydrounit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    eq = sub.add_parser("equilibria", parents=[common], help="balance curves and equilibria")
    g = eq.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="single voltage ratio")
    g.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    eq.add_argument("--plot", action="store_true", help="write mu0 and power curves as SVG")

    st = sub.add_parser("stability", parents=[common], help="stability sweep over voltage")
    st.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    st.add_argument("--governor", choices=("linearized", "deadband"), default="linearized")
    st.add_argument("--plot", action="store_true")

    sim = sub.add_parser("simulate", parents=[common], help="time-domain scenario")
    sim.add_argument("--scenario", choices=(*SCENARIOS, "custom"), default="rated")
    sim.add_argument("--gamma", type=float, help="voltage ratio for the custom scenario")
    sim.add_argument("--x0", type=float, nargs=9, help="initial state (nine values)")
    sim.add_argument("--no-chain", action="store_true", help="cold-start reduced scenarios")
    sim.add_argument(
        "--perturb", type=float, metavar="SIZE",
        help="custom scenario only: start SIZE away from the operating equilibrium",
    )
    sim.add_argument("--T-end", type=float, dest="T_end", help="override the horizon [s]")
    sim.add_argument("--plot", choices=("none", "timeseries", "projection3"), default="none")

    amp = sub.add_parser("amplitude", parents=[common], help="oscillation amplitude vs voltage")
    amp.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    amp.add_argument("--T-end", type=float, dest="T_end", help="override the horizon [s]")
    amp.add_argument("--plot", action="store_true")

    sub.add_parser("check", parents=[common], help="run the consistency checks")
    return p


def cmd_equilibria(args, params, integ, out, manifest):
    grid = [args.gamma] if args.gamma is not None else _grid(args.grid, (0.3, 1.1, 0.01))
    curve = balance_curves(grid, params, jobs=args.jobs)
    manifest.add(write_csv(out / "equilibria.csv", "balance", BALANCE_COLUMNS, balance_rows(curve)), out)
    points = []
    for g, err in zip(curve.gamma_grid, curve.errors):
        if err:
            points.append({"gamma": g, "error": err})
            log.warning("gamma=%s: %s", g, err)
        else:
            points.append(operating_equilibrium(g, params).to_dict())
    manifest.add(write_json(out / "equilibria.json", {"points": points}), out)
    if args.plot:
        data = {"gamma": curve.gamma_grid, "mu0": curve.mu0_values, "power": curve.power_values}
        for var, label in (("mu0", "mu_0 [p.u.]"), ("power", "P [p.u.]")):
            spec = PlotSpec("curve", ("gamma", var), "gamma", label, f"{var}.svg", f"{var} against voltage")
            manifest.add(render_svg(spec, data, out), out)
    return EXIT_OK


def cmd_stability(args, params, integ, out, manifest):
    grid = _grid(args.grid, (0.5, 1.1, 0.005))
    res = stability_sweep(grid, params, governor=args.governor, jobs=args.jobs)
    manifest.add(write_csv(out / "stability.csv", "stability", VERDICT_COLUMNS, verdict_rows(res)), out)
    summary = {"governor": args.governor, "windows": res.windows, "failures": res.failures}
    manifest.add(write_json(out / "stability_window.json", summary), out)
    for m, w in res.windows.items():
        if w["gamma_1"] is None:
            print(f"{m}: operating branch stable on the whole grid")
        else:
            print(f"{m}: unstable for gamma in [{w['gamma_1']:.4f}, {w['gamma_2']:.4f}]"
                  f"{'' if w['contiguous'] else ' (not contiguous)'}")
    if args.plot:
        eig = [v for v in res.verdicts if v.method == "eigen_bound"]
        data = {"gamma": [v.gamma for v in eig], "theta": [v.theta % (2 * math.pi) for v in eig]}
        spec = PlotSpec("sweep_band", ("gamma", "theta"), "gamma", "theta [rad]", "stability.svg",
                        "equilibria: + stable, x unstable")
        w = res.windows["eigen_bound"]
        extra = {"stable": [v.stable != "unstable" for v in eig], "window": (w["gamma_1"], w["gamma_2"])}
        manifest.add(render_svg(spec, data, out, extra), out)
    return EXIT_OK


def cmd_simulate(args, params, integ, out, manifest):
    if args.T_end is not None:
        integ = replace(integ, T_end=args.T_end, T_discard=min(integ.T_discard, 0.6 * args.T_end))
    if args.perturb is not None:
        if args.scenario != "custom" or args.gamma is None:
            raise ConfigError("--perturb needs --scenario custom and --gamma")
        eq = operating_equilibrium(args.gamma, params)
        x0 = perturbed_start(eq, args.perturb, args.seed)
        p = params.with_gamma(args.gamma)
        traj = integrate(x0, p, eq.mu_0, integ)
        report = classify_regime(traj, integ)
    else:
        traj, report = run_scenario(
            args.scenario, params, integ, gamma=args.gamma, x0=args.x0, chain=not args.no_chain
        )
    manifest.add(
        write_csv(out / "trajectory.csv", "trajectory", TRAJECTORY_COLUMNS, trajectory_rows(traj)), out
    )
    doc = report.to_dict()
    doc["scenario"] = args.scenario
    doc["mu_0"] = traj.mu_0
    doc["events"] = {k: sum(1 for _, e in traj.events if e == k)
                     for k in ("stop_hit", "stop_release", "deadband_cross")}
    manifest.add(write_json(out / "regime.json", doc), out)
    print(f"gamma={report.gamma}: {report.kind}, s amplitude {report.amplitude_s:.4g}"
          + (f", period {report.period:.4g} s" if report.period else ""))
    if args.plot != "none":
        data = {name: traj.column(name) if name != "t" else traj.times for name in TRAJECTORY_COLUMNS}
        if args.plot == "timeseries":
            spec = PlotSpec("timeseries", ("t", "s"), "t [s]", "s [p.u.]", "timeseries.svg",
                            f"gamma = {report.gamma}")
        else:
            spec = PlotSpec("projection3", ("theta_delta", "mu_delta", "s"), "", "",
                            "projection.svg", f"gamma = {report.gamma}")
        manifest.add(render_svg(spec, data, out), out)
    return EXIT_OK


def cmd_amplitude(args, params, integ, out, manifest):
    if args.T_end is not None:
        integ = replace(integ, T_end=args.T_end, T_discard=min(integ.T_discard, 0.6 * args.T_end))
    grid = _grid(args.grid, (0.80, 0.98, 0.01))
    points = amplitude_sweep(grid, params, integ, jobs=args.jobs)
    manifest.add(
        write_csv(out / "amplitude.csv", "amplitude", AMPLITUDE_COLUMNS, amplitude_rows(points)), out
    )
    for pt in points:
        if pt.note:
            log.info("beta=%s %s: %s", pt.beta, pt.kind, pt.note)
    if args.plot:
        data = {"beta": [p.beta for p in points], "amplitude_s": [p.amplitude_s for p in points]}
        spec = PlotSpec("curve", ("beta", "amplitude_s"), "beta", "s peak-to-peak", "amplitude.svg",
                        "oscillation amplitude against voltage")
        manifest.add(render_svg(spec, data, out), out)
    return EXIT_OK


def cmd_check(args, params, integ, out, manifest):
    results = run_checks(params, seed=args.seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: value={r.value:.4g} threshold={r.threshold:.4g}")
        if args.verbose or not r.passed:
            for k, v in r.detail.items():
                print(f"    {k}: {v}")
    manifest.add(write_json(out / "check.json", {"checks": [asdict(r) for r in results]}), out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {
    "equilibria": cmd_equilibria,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
    "amplitude": cmd_amplitude,
    "check": cmd_check,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    if args.jobs < 1:
        print("hydrounit: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        params, integ = load_config(args.config, strict=args.command != "check")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(command=["hydrounit", *argv], config_hash=config_hash(params, integ))
        code = COMMANDS[args.command](args, params, integ, out, manifest)
        manifest.write(out)
        return code
    except ValueError as exc:
        # ConfigError is a ValueError; plain ValueErrors come from bad grids or gammas
        print(f"hydrounit: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, HydroUnitError, FloatingPointError) as exc:
        print(f"hydrounit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
