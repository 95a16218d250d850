"""Myopic vs forecast vs oracle relocation on the rotating hot-zone scenario."""

import argparse
import json
import time

import numpy as np

from ridedispatch.scenarios import run_modes


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--fleet", type=int, default=10)
    p.add_argument("--rate", type=float, default=60.0)
    p.add_argument("--hot-share", type=float, default=0.8)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--cell", type=int, default=60)
    p.add_argument("--sim-seconds", type=int, default=3600)
    p.add_argument("--out")
    a = p.parse_args()
    rows = []
    t0 = time.time()
    for seed in range(a.seeds):
        r = run_modes(seed, a.fleet, rate=a.rate, hot_share=a.hot_share, grid=a.grid, cell=a.cell,
                      sim_seconds=a.sim_seconds)
        rows.append(r)
        print(seed, {m: round(v["mean"], 1) for m, v in r.items()},
              {m: v["moved"] for m, v in r.items()}, f"{time.time() - t0:.0f}s", flush=True)
    means = {m: float(np.mean([r[m]["mean"] for r in rows])) for m in rows[0]}
    red = {m: 100 * (means["myopic"] - means[m]) / means["myopic"] for m in means}
    print(json.dumps({"mean_wait": means, "reduction_pct": red}, indent=1))
    if a.out:
        with open(a.out, "w") as fh:
            json.dump({"runs": rows, "mean_wait": means, "reduction_pct": red}, fh, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
