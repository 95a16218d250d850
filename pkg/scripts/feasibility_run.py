"""Large uniform-demand simulation: checks invariants and writes the report directory."""

import argparse
import time

from ridedispatch.engine import SimConfig, run
from ridedispatch.network import build_grid
from ridedispatch.report import save_report
from ridedispatch.scenarios import uniform_trips


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--requests", type=int, default=2000)
    p.add_argument("--fleet", type=int, default=20)
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--cell", type=int, default=30)
    p.add_argument("--hours", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--out", default="runs/feasibility")
    a = p.parse_args()
    _, matrix, zones = build_grid(a.grid, a.grid, a.cell, 2, 2)
    trips = uniform_trips(len(matrix), a.requests, int(a.hours * 3600), seed=a.seed)
    t0 = time.perf_counter()
    rep = run(trips, SimConfig(fleet_size=a.fleet, seed=a.seed), matrix, zones)
    summary = save_report(rep, a.out)
    print(f"{time.perf_counter() - t0:.1f}s  completed {summary['completed']}/{summary['requests']}  "
          f"mean wait {summary['waits']['mean']:.1f}s  violations {summary['violations']}")
    for v in rep.violations[:20]:
        print("  ", v)


if __name__ == "__main__":
    main()
