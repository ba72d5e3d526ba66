"""Command-line interface: simulate, steady, estimate, serve.

Exit codes: 0 success, 2 scenario parse/validation error, 3 physics or
simulation error.
"""

import argparse
import json
import os
import sys

from .errors import CryoloopError, ScenarioError
from .scenario import Scenario, apply_overrides, write_telemetry_csv

TABLE_ROWS = [
    ("Cryocooler 1 (T1)", "T1"),
    ("Cryocooler 2 (T2)", "T2"),
    ("Fan intake (T3)", "T3"),
    ("Cryostat outlet (T4)", "T4"),
    ("Cryostat inlet (T5)", "T5"),
    ("Merge inlet (T9)", "T9"),
    ("Merge outlet (T10)", "T10"),
    ("Exp 1 Inlet (T11)", "T11"),
    ("Exp 1 outlet (T12)", "T12"),
    ("Exp 2 Inlet (T7)", "T7"),
    ("Exp 2 outlet (T8)", "T8"),
]

EXIT_SCENARIO = 2
EXIT_PHYSICS = 3


def _load_scenario(path, overrides):
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else None
        raise ScenarioError(f"invalid YAML: {exc}", loc) from exc
    if overrides:
        doc = apply_overrides(doc, overrides)
    return Scenario.from_dict(doc)


def cmd_simulate(args) -> int:
    try:
        scenario = _load_scenario(args.scenario, args.set)
    except (ScenarioError, OSError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    try:
        frames = scenario.run()
    except CryoloopError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS

    csv_path = args.output or scenario.csv_path
    if csv_path is None:
        base = os.path.splitext(os.path.basename(args.scenario))[0]
        csv_path = base + ".csv"
    write_telemetry_csv(frames, csv_path)

    last = frames[-1]
    print(f"wrote {len(frames)} frames to {csv_path}")
    print(f"final time: {last.time_s:.1f} s   pressure: {last.pressure_pa / 1e5:.3f} bar")
    print("final sensor table:")
    for label, key in TABLE_ROWS:
        print(f"  {label:24s} {last.sensors[key]:8.2f} K")
    return 0


def cmd_steady(args) -> int:
    from .steady import solve_steady

    try:
        scenario = _load_scenario(args.scenario, args.set)
        topology = scenario.build_topology()
    except (ScenarioError, OSError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    initial = scenario.initial
    pressure = float(initial.get("pressure_bar", 20.0)) * 1e5
    rpm = float(initial.get("rpm", 21000.0))
    heaters = {k: float(v) for k, v in initial.get("heater_powers_w", {}).items()}
    try:
        report = solve_steady(topology, rpm, heaters, pressure)
    except CryoloopError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS

    print(f"{'Position':26s} {'Temperature (K)':>15s}")
    for label, key in TABLE_ROWS:
        print(f"{label:26s} {report.sensors[key]:15.1f}")
    print()
    print(f"total active load:  {report.total_active_w:8.1f} W")
    print(f"total passive load: {report.total_passive_w:8.1f} W")
    for name, load in report.cooler_loads.items():
        print(f"{name} absorbed:   {load:8.1f} W")
    for name, plate in report.sink_plate_temperatures.items():
        print(f"{name} sink plate:  {plate:8.2f} K")
    flow = report.flow
    print(f"loop flow: {flow.total_volume_flow * 3600:.3f} m^3/hr "
          f"({flow.total_mass_flow * 1000:.3f} g/s) at {flow.rpm:.0f} rpm")

    if args.report:
        doc = {
            "sensors_k": {k: report.sensors[k] for _, k in TABLE_ROWS},
            "cooler_loads_w": report.cooler_loads,
            "sink_plate_temperatures_k": report.sink_plate_temperatures,
            "total_active_w": report.total_active_w,
            "total_passive_w": report.total_passive_w,
            "flow_total_m3h": flow.total_volume_flow * 3600.0,
            "flow_branches_m3h": {
                b.name: flow.volume_flows[b.name] * 3600.0 for b in topology.branches
            },
            "mass_flow_total_gs": flow.total_mass_flow * 1000.0,
            "pressure_bar": pressure / 1e5,
            "max_residual_w": report.max_residual_w,
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        print(f"wrote report to {args.report}")
    return 0


def cmd_estimate(args) -> int:
    import csv as _csv

    import yaml

    from .analysis import (
        HeaterStepRecord,
        decompose_passive_loads,
        experiment_volume_flow,
    )

    try:
        with open(args.annotations, "r", encoding="utf-8") as fh:
            ann = yaml.safe_load(fh.read())
        rows = []
        with open(args.telemetry, "r", encoding="utf-8") as fh:
            for row in _csv.DictReader(fh):
                rows.append(row)
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    if not rows:
        print("telemetry file is empty", file=sys.stderr)
        return EXIT_SCENARIO

    def window_mean(sensor, t0, t1):
        values = [
            float(r[sensor]) for r in rows if t0 <= float(r["time_s"]) <= t1
        ]
        if not values:
            raise ScenarioError(f"no samples for {sensor} in [{t0}, {t1}]")
        return sum(values) / len(values)

    try:
        for step in ann.get("heater_steps", []):
            inlet, outlet = step["inlet_sensor"], step["outlet_sensor"]
            b0, b1 = step["window_before_s"]
            a0, a1 = step["window_after_s"]
            record = HeaterStepRecord.from_telemetry(
                power_before=float(step["power_before_w"]),
                power_after=float(step["power_after_w"]),
                inlet_before=window_mean(inlet, b0, b1),
                inlet_after=window_mean(inlet, a0, a1),
                outlet_before=window_mean(outlet, b0, b1),
                outlet_after=window_mean(outlet, a0, a1),
                pressure=float(step["pressure_bar"]) * 1e5,
            )
            flow = experiment_volume_flow(record)
            print(f"{step.get('experiment', '?')}: {flow * 3600:.4f} m^3/hr")
        cfgs = ann.get("passive_configurations")
        if cfgs:
            measurements = {
                frozenset(c["experiments"]): float(c["total_passive_w"]) for c in cfgs
            }
            cryostat, loops, residual = decompose_passive_loads(measurements)
            print(f"cryostat passive: {cryostat:.2f} W")
            for name in sorted(loops):
                print(f"{name} loop passive: {loops[name]:.2f} W")
            print(f"residual norm: {residual:.3g} W")
    except (KeyError, ScenarioError) as exc:
        print(f"annotation error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except CryoloopError as exc:
        print(f"estimate error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port or int(os.environ.get("CRYOLOOP_PORT", "8000"))
    runs_dir = args.runs_dir or os.environ.get("CRYOLOOP_RUNS_DIR", "runs")
    app = create_app(runs_dir=runs_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cryoloop",
        description="Closed-loop cryogenic helium network simulator and toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario file and write telemetry CSV")
    p_sim.add_argument("scenario", help="scenario YAML path")
    p_sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key, e.g. initial.rpm=0")
    p_sim.add_argument("-o", "--output", help="telemetry CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_steady = sub.add_parser("steady", help="solve and print the steady sensor table")
    p_steady.add_argument("scenario", help="scenario YAML path")
    p_steady.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_steady.add_argument("--report", help="also write a JSON report to this path")
    p_steady.set_defaults(func=cmd_steady)

    p_est = sub.add_parser("estimate", help="estimate flows and loads from telemetry")
    p_est.add_argument("telemetry", help="telemetry CSV path")
    p_est.add_argument("annotations", help="step/configuration annotation YAML")
    p_est.set_defaults(func=cmd_estimate)

    p_serve = sub.add_parser("serve", help="run the interactive session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=None,
                         help="default $CRYOLOOP_PORT or 8000")
    p_serve.add_argument("--runs-dir", default=None,
                         help="default $CRYOLOOP_RUNS_DIR or ./runs")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
