"""Synthetic trip generators for experiments and tests."""

from __future__ import annotations

import numpy as np

from .demand import DAY, TripRecord
from .network import ZoneMap, build_grid


def uniform_trips(n_locations, n_trips, duration, seed=0, max_party=1) -> list[TripRecord]:
    """``n_trips`` trips with uniform times in [0, duration) and uniform distinct endpoints."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.integers(0, duration, n_trips))
    trips = []
    for t in times:
        o, d = rng.choice(n_locations, size=2, replace=False)
        trips.append(TripRecord(int(t), int(rng.integers(1, max_party + 1)), int(o), int(d)))
    return trips


def hot_zone(t, n_zones, rotation_seconds):
    """Zone that is hot at absolute time ``t``; the schedule repeats every day."""
    return int((t % DAY) // rotation_seconds) % n_zones


def hot_zone_trips(zone_map: ZoneMap, start, end, rate_per_hour, hot_share=0.7,
                   rotation_seconds=1800, seed=0) -> list[TripRecord]:
    """Poisson trips where a share of origins falls in a rotating hot zone.

    The hot zone follows a fixed daily schedule, so the pattern is periodic
    with period one week as well. Destinations are uniform over all other
    locations. Times are on the absolute clock ``[start, end)``.
    """
    rng = np.random.default_rng(seed)
    n_loc = len(zone_map.zone_of)
    members = zone_map.members
    n = int(rng.poisson(rate_per_hour * (end - start) / 3600))
    times = np.sort(rng.integers(start, end, n))
    trips = []
    for t in times:
        if rng.random() < hot_share:
            zone = members[hot_zone(int(t), zone_map.n_zones, rotation_seconds)]
            o = int(zone[rng.integers(len(zone))])
        else:
            o = int(rng.integers(n_loc))
        d = int(rng.integers(n_loc - 1))
        d += d >= o
        trips.append(TripRecord(int(t), 1, o, d))
    return trips


def split_history(trips, history_seconds):
    """Split an absolute-clock trip list into (history, simulation trips shifted to start at 0)."""
    hist = [t for t in trips if t.request_time < history_seconds]
    sim = [TripRecord(t.request_time - history_seconds, t.passengers, t.origin, t.destination)
           for t in trips if t.request_time >= history_seconds]
    return hist, sim


def hot_zone_scenario(seed, grid=8, cell=60, zones=2, rate=60.0, hot_share=0.8, rotation=1800,
                      history_days=8, sim_seconds=3600, period=300):
    """Grid, zone map, history trips, simulation trips and history length for one seed.

    Trips come from one absolute clock; the first ``history_days`` days become
    forecasting history and the following ``sim_seconds`` are simulated.
    """
    _, matrix, zone_map = build_grid(grid, grid, cell, zones, zones, period)
    H = history_days * DAY
    trips = hot_zone_trips(zone_map, 0, H + sim_seconds, rate, hot_share, rotation, seed)
    history, sim = split_history(trips, H)
    return matrix, zone_map, history, sim, H


def run_modes(seed, fleet=10, modes=("myopic", "forecast", "oracle"), **scenario_kw):
    """Mean wait, violation count and vehicles moved per mode on one hot-zone seed."""
    from .engine import SimConfig, run
    from .report import wait_stats

    matrix, zone_map, history, sim, H = hot_zone_scenario(seed, **scenario_kw)
    out = {}
    for mode in modes:
        rep = run(sim, SimConfig(fleet_size=fleet, mode=mode, seed=seed), matrix, zone_map,
                  history=history, history_seconds=H)
        out[mode] = {"mean": wait_stats(rep.waits())["mean"], "violations": len(rep.violations),
                     "moved": rep.diagnostics.get("vehicles_moved", 0)}
    return out
