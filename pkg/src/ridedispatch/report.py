"""Simulation reports: raw per-request data, summaries and A/B comparisons.

Standard deviations are population (divide by n). Percentiles use linear
interpolation between order statistics (numpy's default).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
HIST_BIN = 30
NA = "n/a"


class ComparisonError(ValueError):
    pass


@dataclass
class SimulationReport:
    requests: list  # one dict per request, sorted by id
    vehicles: list  # one dict per vehicle: idle/serving/relocating seconds
    n_zones: int
    end_time: int
    config: dict = field(default_factory=dict)
    occupancy: list = field(default_factory=list)  # mean riders per occupied vehicle, per epoch
    epochs: list = field(default_factory=list)  # dispatch traces
    diagnostics: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def build(cls, state, zone_map, config, epochs, occupancy, end, diagnostics):
        zo = zone_map.zone_of
        reqs = []
        for rid in sorted(state.requests):
            st = state.requests[rid]
            r = st.request
            reqs.append({
                "id": r.id, "request_time": r.request_time, "earliest_pickup": r.earliest_pickup,
                "origin": r.origin, "destination": r.destination, "origin_zone": zo[r.origin],
                "destination_zone": zo[r.destination], "riders": r.riders, "shortest_time": r.shortest_time,
                "max_ride": r.max_ride, "status": st.status, "vehicle": st.vehicle,
                "pickup_time": st.pickup_time, "dropoff_time": st.dropoff_time,
                "wait": None if st.pickup_time is None else st.pickup_time - r.earliest_pickup,
                "ride": None if st.dropoff_time is None else st.dropoff_time - st.pickup_time,
            })
        vehicles = [{"id": v.id, "idle_seconds": v.seconds["idle"], "serving_seconds": v.seconds["serving"],
                     "relocating_seconds": v.seconds["relocating"]} for v in state.vehicles]
        return cls(reqs, vehicles, zone_map.n_zones, end, asdict(config), occupancy, epochs,
                   dict(diagnostics), list(state.violations))

    def waits(self) -> list:
        return [r["wait"] for r in self.requests if r["wait"] is not None]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text) -> "SimulationReport":
        data = json.loads(text)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')}")
        return cls(**data)


def wait_stats(waits) -> dict:
    w = np.asarray(waits, dtype=float)
    if w.size == 0:
        return {"count": 0, "mean": 0.0, "std": 0.0, "p50": 0.0, "p90": 0.0, "p99": 0.0, "max": 0.0}
    p50, p90, p99 = np.percentile(w, [50, 90, 99])
    return {"count": int(w.size), "mean": float(w.mean()), "std": float(w.std()), "p50": float(p50),
            "p90": float(p90), "p99": float(p99), "max": float(w.max())}


def histogram(waits, bin_seconds=HIST_BIN) -> dict:
    """Counts over [0, b), [b, 2b), ...; the last edge closes the largest wait."""
    w = np.asarray(waits, dtype=np.int64)
    n_bins = int(w.max() // bin_seconds) + 1 if w.size else 0
    counts = np.bincount(w // bin_seconds, minlength=n_bins) if w.size else np.zeros(0, dtype=np.int64)
    return {"bin_seconds": bin_seconds, "edges": [k * bin_seconds for k in range(n_bins + 1)],
            "counts": counts.tolist()}


def zone_table(report: SimulationReport) -> list:
    per = [[] for _ in range(report.n_zones)]
    counts = [0] * report.n_zones
    for r in report.requests:
        counts[r["origin_zone"]] += 1
        if r["wait"] is not None:
            per[r["origin_zone"]].append(r["wait"])
    return [{"zone": z, "count": counts[z], "mean_wait": float(np.mean(per[z])) if per[z] else NA}
            for z in range(report.n_zones)]


def summarize(report: SimulationReport) -> dict:
    waits = report.waits()
    veh = report.vehicles
    occ = [o for o in report.occupancy if o is not None]
    total = {k: int(sum(v[k] for v in veh)) for k in ("idle_seconds", "serving_seconds", "relocating_seconds")}
    return {
        "schema_version": SCHEMA_VERSION,
        "std_convention": "population",
        "waits": wait_stats(waits),
        "histogram": histogram(waits),
        "zones": zone_table(report),
        "vehicles": {"count": len(veh), "totals": total,
                     "mean": {k: (t / len(veh) if veh else 0.0) for k, t in total.items()}},
        "requests": len(report.requests),
        "completed": sum(r["status"] == "completed" for r in report.requests),
        "mean_occupancy": float(np.mean(occ)) if occ else 0.0,
        "end_time": report.end_time,
        "violations": len(report.violations),
        "diagnostics": report.diagnostics,
    }


def improvement(mean_a, mean_b):
    """Percent reduction of a's mean relative to b's; not applicable when b's mean is 0."""
    if mean_a == NA or mean_b == NA or mean_b == 0:
        return NA
    return 100.0 * (mean_b - mean_a) / mean_b


def _trip_key(report):
    return [(r["request_time"], r["origin"], r["destination"], r["riders"]) for r in report.requests]


def compare(a: SimulationReport, b: SimulationReport) -> dict:
    """Improvement of ``a`` over ``b`` overall and per origin zone."""
    if _trip_key(a) != _trip_key(b):
        raise ComparisonError("reports were produced from different trip inputs")
    sa, sb = wait_stats(a.waits()), wait_stats(b.waits())
    za, zb = zone_table(a), zone_table(b)
    zones = []
    for x, y in zip(za, zb):
        imp = NA if x["count"] == 0 else improvement(x["mean_wait"], y["mean_wait"])
        zones.append({"zone": x["zone"], "count": x["count"], "mean_a": x["mean_wait"],
                      "mean_b": y["mean_wait"], "improvement": imp})
    return {
        "schema_version": SCHEMA_VERSION,
        "requests": len(a.requests),
        "mean_a": sa["mean"], "mean_b": sb["mean"], "std_a": sa["std"], "std_b": sb["std"],
        "improvement": improvement(sa["mean"], sb["mean"]) if sa["count"] or sb["count"] else 0.0,
        "zones": zones,
    }


def bucket_by_size(comparisons, thresholds=(40_000, 50_000)) -> list:
    """Average improvement per instance-size bucket, buckets split at ``thresholds`` requests."""
    edges = [0, *sorted(thresholds), float("inf")]
    out = []
    for lo, hi in zip(edges, edges[1:]):
        vals = [c["improvement"] for c in comparisons if lo <= c["requests"] < hi and c["improvement"] != NA]
        out.append({"min_requests": lo, "max_requests": None if hi == float("inf") else hi,
                    "instances": len(vals), "mean_improvement": float(np.mean(vals)) if vals else NA})
    return out


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row[c] is None else row[c] for c in columns])


def save_report(report: SimulationReport, directory):
    """Write report.json, summary.json, per-request/vehicle/zone/epoch CSVs and a histogram dump."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(report.to_json() + "\n")
    summary = summarize(report)
    (d / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    if report.requests:
        _write_csv(d / "requests.csv", report.requests, list(report.requests[0]))
    else:
        (d / "requests.csv").write_text("")
    _write_csv(d / "vehicles.csv", report.vehicles,
               ["id", "idle_seconds", "serving_seconds", "relocating_seconds"])
    _write_csv(d / "zones.csv", summary["zones"], ["zone", "count", "mean_wait"])
    cols = ["epoch", "new", "pending", "objective", "lp_objective", "pool_size", "converged", "unserved"]
    _write_csv(d / "epochs.csv", [{c: e.get(c) for c in cols} for e in report.epochs], cols)
    h = summary["histogram"]
    lines = ["# wait_bin_start count"] + [f"{e} {c}" for e, c in zip(h["edges"], h["counts"])]
    (d / "histogram.dat").write_text("\n".join(lines) + "\n")
    return summary


def load_report(directory) -> SimulationReport:
    return SimulationReport.from_json((Path(directory) / "report.json").read_text())
