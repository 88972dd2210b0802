"""Command-line front end.

Subcommands:

    etank simulate      run a named scenario, write trace CSV + manifest
    etank audit         check a trace file against the passivity inequality
    etank compare-tanks paired quadratic/exponential runs, wide CSV + summary

Exit codes: 0 success, 1 usage or input error, 2 the simulation terminated on
a singularity or escape (the partial trace is still written), 3 audit failed.
Flags may also be supplied through a JSON config file (--config); explicit
flags win on conflict.  --plot renders a figure next to the CSV output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .closed_loop import TraceAuditError, passivity_audit
from .scenarios import SCENARIOS, compare_energy_laws
from .sim_engine import SimConfig, simulate
from .tank import EnergyLaw, ValveConfig
from .trace_io import (RunManifest, TraceFormatError, manifest_path_for,
                       read_manifest, read_trace_csv, write_manifest,
                       write_trace_csv)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # exit code 2 is reserved for terminated runs; usage errors must exit 1
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="etank", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"etank {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a scenario and write its trace")
    sim.add_argument("--scenario", help="scenario name (see --list-scenarios)")
    sim.add_argument("--list-scenarios", action="store_true",
                     help="print available scenario names and exit")
    sim.add_argument("--tank", choices=["quadratic", "exponential"],
                     help="tank energy law (default exponential)")
    sim.add_argument("--m", type=float, help="mass [kg] (default 1)")
    sim.add_argument("--f-bar", type=float, help="constant action [N] (default 1)")
    sim.add_argument("--t0-energy", type=float, help="initial tank energy [J] (default 1)")
    sim.add_argument("--dt", type=float, help="step size [s] (default 1e-4)")
    sim.add_argument("--t-end", type=float, help="end time [s] (default 3)")
    sim.add_argument("--method", choices=["rk4", "euler"], help="integrator (default rk4)")
    sim.add_argument("--stride", type=int, help="record every k-th step (default 1)")
    sim.add_argument("--seed", type=int, help="seed recorded in the manifest (default 0)")
    sim.add_argument("--valve", action="store_true", default=None,
                     help="enable the detachment valve (scenario default: disabled)")
    sim.add_argument("--epsilon", type=float, help="valve threshold [J] (default 0.01)")
    sim.add_argument("--smooth-width", type=float, help="smooth valve ramp width [J]")
    sim.add_argument("--t-max", type=float, help="overflow ceiling [J]")
    sim.add_argument("--p-max", type=float, help="extracted-power limit [W]")
    sim.add_argument("--beta", type=float, help="dissipation refill fraction (default 0)")
    sim.add_argument("--out", help="trace CSV path (default <scenario>.csv)")
    sim.add_argument("--plot", nargs="?", const="", default=None, metavar="PATH",
                     help="render a figure (default path: <out>.png)")
    sim.add_argument("--config", help="JSON file with defaults mirroring flag names")
    sim.set_defaults(func=cmd_simulate)

    aud = sub.add_parser("audit", help="audit a trace CSV for passivity")
    aud.add_argument("trace", help="trace CSV path")
    aud.add_argument("--storage", choices=["total", "plant"], default="total",
                     help="storage function: plant H or total H + T (default)")
    aud.add_argument("--tol", type=float, default=None,
                     help="violation tolerance [J] (default: 1e-6 + 10*dt^2 per unit time)")
    aud.add_argument("--manifest", default=None,
                     help="manifest JSON (default: <trace>.manifest.json when present)")
    aud.set_defaults(func=cmd_audit)

    cmp_ = sub.add_parser("compare-tanks",
                          help="paired quadratic/exponential runs of the constant-force scenario")
    cmp_.add_argument("--m", type=float, default=1.0)
    cmp_.add_argument("--f-bar", type=float, default=1.0)
    cmp_.add_argument("--t0-energy", type=float, default=1.0)
    cmp_.add_argument("--dt", type=float, default=1e-4)
    cmp_.add_argument("--t-end", type=float, default=3.0)
    cmp_.add_argument("--out", default="compare_tanks.csv", help="wide CSV path")
    cmp_.add_argument("--plot", nargs="?", const="", default=None, metavar="PATH",
                      help="render the comparison figure (default path: <out>.png)")
    cmp_.set_defaults(func=cmd_compare_tanks)

    return parser


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise UsageError(f"cannot read config file: {err}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"config file is not valid JSON: {err}") from None
    if not isinstance(payload, dict):
        raise UsageError("config file must hold a JSON object of flag values")
    return {str(k).replace("-", "_"): v for k, v in payload.items()}


def _resolve(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if args.list_scenarios:
        print("available scenarios: " + ", ".join(sorted(SCENARIOS)))
        return 0
    scenario = _resolve(args, config, "scenario", None)
    if scenario is None:
        raise UsageError("--scenario is required "
                         f"(available: {', '.join(sorted(SCENARIOS))})")
    if scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {scenario!r} "
                         f"(available: {', '.join(sorted(SCENARIOS))})")

    law = EnergyLaw(_resolve(args, config, "tank", "exponential"))
    m = float(_resolve(args, config, "m", 1.0))
    f_bar = float(_resolve(args, config, "f_bar", 1.0))
    t0_energy = float(_resolve(args, config, "t0_energy", 1.0))
    use_valve = bool(_resolve(args, config, "valve", False))

    try:
        if use_valve:
            valve = ValveConfig(
                epsilon=float(_resolve(args, config, "epsilon", 1e-2)),
                smooth_width=_resolve(args, config, "smooth_width", None),
                t_max=_resolve(args, config, "t_max", None),
                p_max=_resolve(args, config, "p_max", None),
                beta=float(_resolve(args, config, "beta", 0.0)),
            )
        else:
            valve = None
        sys_ = SCENARIOS[scenario](m=m, f_bar=f_bar, law=law, t0_energy=t0_energy,
                                   valve=valve)
        cfg = SimConfig(
            dt=float(_resolve(args, config, "dt", 1e-4)),
            t_end=float(_resolve(args, config, "t_end", 3.0)),
            method=_resolve(args, config, "method", "rk4"),
            record_stride=int(_resolve(args, config, "stride", 1)),
            seed=int(_resolve(args, config, "seed", 0)),
        )
    except ValueError as err:
        raise UsageError(str(err)) from None

    trace, term = simulate(sys_, cfg, scenario=scenario)

    out = Path(_resolve(args, config, "out", None) or f"{scenario}.csv")
    write_trace_csv(trace, out)
    outputs = [str(out)]
    plot = _resolve(args, config, "plot", None)
    if plot is not None:
        from .plots import save_trace_figure

        plot_path = Path(plot) if plot else Path(str(out) + ".png")
        outputs.append(save_trace_figure(trace, plot_path))
    manifest = RunManifest.from_run(trace, term, outputs, __version__)
    write_manifest(manifest, manifest_path_for(out))

    print(f"scenario {scenario}: {term.describe()}")
    print(f"trace written to {out} ({len(trace)} samples)")
    return 0 if term.completed else 2


def cmd_audit(args) -> int:
    if args.tol is not None and args.tol <= 0.0:
        raise UsageError(f"--tol must be positive, got {args.tol}")
    try:
        trace = read_trace_csv(args.trace)
    except OSError as err:
        raise UsageError(f"cannot read trace: {err}") from None
    except TraceFormatError as err:
        print(f"malformed trace {args.trace}: {err}", file=sys.stderr)
        return 1

    manifest_path = Path(args.manifest) if args.manifest else manifest_path_for(args.trace)
    if args.manifest and not manifest_path.exists():
        raise UsageError(f"manifest not found: {manifest_path}")
    if manifest_path.exists():
        manifest = read_manifest(manifest_path)
        trace.meta.update(manifest.trace_meta)

    try:
        report = passivity_audit(trace, storage=args.storage, tol=args.tol)
    except TraceAuditError as err:
        print(f"cannot audit {args.trace}: {err}", file=sys.stderr)
        return 1
    print(report.to_text())
    print("---")
    print(report.to_kv())
    return 0 if report.passed else 3


def cmd_compare_tanks(args) -> int:
    try:
        cfg = SimConfig(dt=args.dt, t_end=args.t_end)
        result = compare_energy_laws(cfg, m=args.m, f_bar=args.f_bar,
                                     t0_energy=args.t0_energy)
    except ValueError as err:
        raise UsageError(str(err)) from None

    out = Path(args.out)
    lines = ["t,T_quad,T_exp,xt_quad,xt_exp"]
    for i in range(len(result.t)):
        lines.append(",".join(format(v, ".17g") for v in (
            result.t[i], result.energy_quadratic[i], result.energy_exponential[i],
            result.state_quadratic[i], result.state_exponential[i])))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    if args.plot is not None:
        from .plots import save_comparison_figure

        plot_path = Path(args.plot) if args.plot else Path(str(out) + ".png")
        save_comparison_figure(result, plot_path)

    print(f"quadratic run: {result.termination_quadratic.describe()}")
    print(f"exponential run: {result.termination_exponential.describe()}")
    print(f"max |T_quad - T_exp| over [0, {result.window_end:.6g}] = "
          f"{result.max_energy_diff:.6e} J")
    print(f"comparison written to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            raise UsageError("a subcommand is required (simulate, audit, compare-tanks)")
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
