"""Command line entry point: simulate, report, convert-tlc, generate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .demand import IngestionError, convert_tlc, read_trips_csv, write_trips_csv
from .engine import SimConfig, run
from .network import (
    ConfigurationError, ParseError, build_grid, load_travel_matrix, load_zone_assignment, zone_map_from_assignment,
)
from .report import ComparisonError, compare, load_report, save_report, summarize
from .scenarios import hot_zone_trips, uniform_trips

log = logging.getLogger("ridedispatch")


def _dims(text):
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from None
    return r, c


def _network(args, period_seconds):
    if args.grid:
        zr, zc = args.zone_grid
        _, matrix, zones = build_grid(*args.grid, args.cell_seconds, zr, zc, period_seconds)
        return matrix, zones
    if not args.zones:
        raise ConfigurationError("--network needs --zones")
    matrix = load_travel_matrix(args.network)
    zone_of = load_zone_assignment(args.zones, len(matrix))
    return matrix, zone_map_from_assignment(zone_of, matrix, period_seconds)


def cmd_simulate(args):
    overrides = {"mode": args.mode, "seed": args.seed}
    config = SimConfig.from_file(args.config, **overrides) if args.config else SimConfig.from_mapping(
        {k: v for k, v in overrides.items() if v is not None})
    matrix, zones = _network(args, config.relocation_seconds)
    trips = read_trips_csv(args.trips)
    history = read_trips_csv(args.history) if args.history else None
    report = run(trips, config, matrix, zones, history=history, history_seconds=args.history_seconds)
    summary = save_report(report, args.out)
    print(json.dumps(summary["waits"], sort_keys=True))
    for v in report.violations:
        log.error("invariant violated: %s", v)
    return 0 if not report.violations else 1


def cmd_summarize(args):
    print(json.dumps(summarize(load_report(args.input)), sort_keys=True, indent=1))
    return 0


def cmd_compare(args):
    result = compare(load_report(args.a), load_report(args.b))
    text = json.dumps(result, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_convert(args):
    n = convert_tlc(args.input, args.out, args.origin_lat, args.origin_lon, args.cell_meters, *args.grid,
                    start=args.start)
    print(f"wrote {n} trips to {args.out}")
    return 0


def cmd_generate(args):
    if args.kind == "uniform":
        trips = uniform_trips(args.grid[0] * args.grid[1], args.trips, args.duration, args.seed)
    else:
        _, _, zones = build_grid(*args.grid, args.cell_seconds, *args.zone_grid)
        trips = hot_zone_trips(zones, args.start, args.start + args.duration, args.rate, args.hot_share,
                               args.rotation, args.seed)
    write_trips_csv(trips, args.out)
    print(f"wrote {len(trips)} trips to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ridedispatch")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the rolling-horizon simulation")
    s.add_argument("--trips", required=True)
    net = s.add_mutually_exclusive_group(required=True)
    net.add_argument("--network", help="travel-time matrix CSV")
    net.add_argument("--grid", type=_dims, help="synthetic grid, e.g. 10x10")
    s.add_argument("--zones", help="location,zone CSV (with --network)")
    s.add_argument("--zone-grid", type=_dims, default=(2, 2))
    s.add_argument("--cell-seconds", type=int, default=60)
    s.add_argument("--config")
    s.add_argument("--mode", choices=["myopic", "forecast", "oracle"])
    s.add_argument("--seed", type=int)
    s.add_argument("--history", help="trip CSV on its own clock, for forecast mode")
    s.add_argument("--history-seconds", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="summarize or compare simulation outputs")
    rsub = r.add_subparsers(dest="report_command", required=True)
    rs = rsub.add_parser("summarize")
    rs.add_argument("--in", dest="input", required=True)
    rs.set_defaults(func=cmd_summarize)
    rc = rsub.add_parser("compare")
    rc.add_argument("--a", required=True)
    rc.add_argument("--b", required=True)
    rc.add_argument("--out")
    rc.set_defaults(func=cmd_compare)

    c = sub.add_parser("convert-tlc", help="map taxi trip records onto a grid")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--origin-lat", type=float, required=True)
    c.add_argument("--origin-lon", type=float, required=True)
    c.add_argument("--cell-meters", type=float, default=400.0)
    c.add_argument("--grid", type=_dims, required=True)
    c.add_argument("--start", help="ISO timestamp of simulation time 0")
    c.set_defaults(func=cmd_convert)

    g = sub.add_parser("generate", help="write a synthetic trip file")
    g.add_argument("--kind", choices=["uniform", "hot-zone"], default="uniform")
    g.add_argument("--grid", type=_dims, default=(10, 10))
    g.add_argument("--zone-grid", type=_dims, default=(2, 2))
    g.add_argument("--cell-seconds", type=int, default=60)
    g.add_argument("--trips", type=int, default=1000)
    g.add_argument("--rate", type=float, default=200.0, help="trips per hour (hot-zone)")
    g.add_argument("--hot-share", type=float, default=0.7)
    g.add_argument("--rotation", type=int, default=1800)
    g.add_argument("--start", type=int, default=0)
    g.add_argument("--duration", type=int, default=3600)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ParseError, IngestionError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
