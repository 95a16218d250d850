"""Rolling-horizon simulation: batch, relocate, dispatch, commit, advance.

Time runs in epochs of ``epoch_seconds``. At the boundary ``now = tau * l``
the engine advances every vehicle to ``now``, ingests the requests that
arrived during the previous epoch, optionally relocates idle vehicles
(every ``relocation_every`` epochs outside myopic mode), and re-dispatches
every request whose riders have not been picked up yet.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .demand import DAY, Batcher, Request, RequestFactory, aggregate_history, clean_trips
from .dispatch import (
    DROPOFF, PICKUP, DispatchParams, Rider, Stop, VehicleSnapshot, check_route, dispatch_epoch, penalty,
)
from .forecast import ForecastUnavailable, VarForecaster, oracle_forecast
from .network import ConfigurationError, TravelTimeMatrix, ZoneMap
from .relocate import MpcInput, estimate_idle, measured_sharing, solve_mpc, solve_vr
from .report import SimulationReport

log = logging.getLogger(__name__)

MOVE = "move"  # travel to a location with no pickup or dropoff
MODES = ("myopic", "forecast", "oracle")


@dataclass
class SimConfig:
    epoch_seconds: int = 30
    relocation_seconds: int = 300
    relocation_every: int = 10
    fleet_size: int = 20
    capacity: int = 4
    alpha: float = 1.5
    beta: int = 240
    rho: float = 420.0
    sharing_ratio: float = 1.2
    measured_sharing: bool = False
    mode: str = "myopic"
    horizon: int = 6
    seed: int = 0
    max_stops: int = 8
    cg_max_iterations: int = 50
    pricing_node_budget: int = 200_000
    mip_node_budget: int = 5_000
    mpc_node_budget: int = 2_000
    close_gap: bool = True
    k_max: int = 8
    forecast_scale: float = 1.0
    forecast_bin_seconds: int = 0  # 0 means one relocation period
    order_selection: str = "system"
    freeze_scheduled: bool = False
    relocating_assignable: bool = False
    origin_weekday: int = 0
    max_epochs: int = 0  # 0 means one simulated day past the last request
    trace_file: str = ""  # relocation trace, JSON lines
    epoch_dump_dir: str = ""  # one JSON file per dispatched epoch

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("epoch_seconds", "relocation_seconds", "relocation_every", "capacity", "horizon", "max_stops"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.fleet_size < 0:
            raise ConfigurationError("fleet_size must be non-negative")
        if self.sharing_ratio < 1:
            raise ConfigurationError("sharing_ratio must be at least 1")
        if self.relocation_seconds != self.relocation_every * self.epoch_seconds:
            log.info("relocation period %ds is not %d epochs; periods are aligned to the invoking epoch",
                     self.relocation_seconds, self.relocation_every)
        return self

    def dispatch_params(self) -> DispatchParams:
        return DispatchParams(max_stops=self.max_stops, cg_max_iterations=self.cg_max_iterations,
                              pricing_node_budget=self.pricing_node_budget,
                              mip_node_budget=self.mip_node_budget, close_gap=self.close_gap)

    @classmethod
    def from_mapping(cls, values: dict) -> "SimConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].default, raw, key)
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path, **overrides) -> "SimConfig":
        values = {}
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(f"{path}:{n}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                values[key] = val
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)


def _coerce(default, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from None
    return raw


@dataclass
class Vehicle:
    id: int
    location: int  # last location reached
    time: int  # when it was reached
    capacity: int
    plan: list = field(default_factory=list)  # committed future stops
    onboard: dict = field(default_factory=dict)  # request id -> pickup time
    relocation: tuple | None = None  # (target, depart, arrive)
    status: str = "idle"
    status_since: int = 0
    seconds: dict = field(default_factory=lambda: {"idle": 0, "serving": 0, "relocating": 0})

    def set_status(self, status, t):
        self.seconds[self.status] += t - self.status_since
        self.status, self.status_since = status, t

    @property
    def free_time(self):
        if self.plan:
            return self.plan[-1].time
        if self.relocation:
            return self.relocation[2]
        return self.time

    @property
    def free_location(self):
        if self.plan:
            return self.plan[-1].location
        if self.relocation:
            return self.relocation[0]
        return self.location


@dataclass
class RequestState:
    request: Request
    status: str = "pending"  # pending | scheduled | picked-up | completed
    vehicle: int | None = None
    pickup_time: int | None = None
    dropoff_time: int | None = None


class FleetState:
    """Ground truth of vehicles and requests; all mutation goes through here."""

    def __init__(self, vehicles, matrix: TravelTimeMatrix):
        self.vehicles = vehicles
        self.matrix = matrix
        self.requests = {}
        self.violations = []
        self.sharing_obs = defaultdict(lambda: deque(maxlen=200))
        self.zone_of = None

    def add_requests(self, batch):
        for r in batch:
            self.requests[r.id] = RequestState(r)

    def load(self, v: Vehicle) -> int:
        return sum(self.requests[i].request.riders for i in v.onboard)

    def advance(self, now):
        """Execute every committed stop and relocation arrival up to ``now``."""
        for v in self.vehicles:
            if v.relocation and v.relocation[2] <= now:
                target, _, arrive = v.relocation
                v.location, v.time, v.relocation = target, arrive, None
                v.set_status("serving" if v.plan else "idle", arrive)
            while v.plan and v.plan[0].time <= now:
                self._execute(v, v.plan.pop(0))
            if not v.plan and v.status == "serving":
                v.set_status("idle", v.time)

    def _execute(self, v: Vehicle, s: Stop):
        v.location, v.time = s.location, s.time
        if s.action == MOVE:
            return
        st = self.requests[s.request_id]
        if s.action == PICKUP:
            if st.status != "scheduled" or st.vehicle != v.id:
                self.violations.append(f"vehicle {v.id} picked up request {st.request.id} in state {st.status}")
            st.status, st.pickup_time = "picked-up", s.time
            v.onboard[st.request.id] = s.time
            load = self.load(v)
            if load > v.capacity:
                self.violations.append(f"vehicle {v.id} over capacity ({load}) at t={s.time}")
            if self.zone_of is not None:
                r = st.request
                self.sharing_obs[(self.zone_of[r.origin], self.zone_of[r.destination])].append(load)
        else:
            picked = v.onboard.pop(st.request.id)
            st.status, st.dropoff_time = "completed", s.time
            ride = s.time - picked
            if ride > st.request.max_ride:
                self.violations.append(
                    f"request {st.request.id} rode {ride}s, limit {st.request.max_ride}s")

    def snapshot(self, now, freeze=False, include_relocating=False):
        """Vehicle snapshots for dispatch plus the stops each keeps regardless of the outcome."""
        snaps, kept = [], {}
        for v in self.vehicles:
            if v.relocation and not include_relocating:
                continue
            if v.relocation:
                target, _, arrive = v.relocation
                snaps.append(VehicleSnapshot(v.id, target, arrive, v.capacity, (), epoch_start=now))
                kept[v.id] = []
                continue
            if not v.plan:
                snaps.append(VehicleSnapshot(v.id, v.location, now, v.capacity, self._riders(v, now), now))
                kept[v.id] = []
                continue
            if freeze:
                last = v.plan[-1]
                snaps.append(VehicleSnapshot(v.id, last.location, last.time, v.capacity, (), epoch_start=now))
                kept[v.id] = list(v.plan)
                continue
            first = v.plan[0]
            prefix = []
            for s in v.plan:
                if s.action != DROPOFF or s.location != first.location or s.time != first.time:
                    break
                prefix.append(s)
            dropped = {s.request_id for s in prefix}
            if not prefix:
                prefix = [Stop(first.location, MOVE, -1, first.time)]
            riders = tuple(r for r in self._riders(v, now) if r.request_id not in dropped)
            snaps.append(VehicleSnapshot(v.id, first.location, first.time, v.capacity, riders, epoch_start=now))
            kept[v.id] = prefix
        return snaps, kept

    def _riders(self, v: Vehicle, now):
        out = []
        for rid in sorted(v.onboard):
            r = self.requests[rid].request
            out.append(Rider(rid, r.destination, now - v.onboard[rid], r.max_ride, r.riders))
        return tuple(out)

    def pending(self, freeze=False):
        states = ("pending",) if freeze else ("pending", "scheduled")
        return [st.request for st in self.requests.values() if st.status in states]

    def commit(self, solution, snaps, kept, pending, now):
        by_id = {r.id: r for r in pending}
        vehicles = {v.id: v for v in self.vehicles}
        for r in pending:
            st = self.requests[r.id]
            if st.status == "scheduled" and st.vehicle in kept:
                st.status, st.vehicle = "pending", None
        for snap in snaps:
            v = vehicles[snap.id]
            route = solution.chosen.get(snap.id)
            if route is None:
                self.violations.append(f"vehicle {snap.id} has no route in the dispatch solution")
                continue
            problems = check_route(route, snap, pending, self.matrix)
            if problems:
                self.violations.extend(f"vehicle {snap.id}: {p}" for p in problems)
            v.plan = kept[snap.id] + list(route.stops)
            for rid in route.served:
                st = self.requests[by_id[rid].id]
                st.status, st.vehicle = "scheduled", snap.id
            if v.plan and v.status == "idle":
                v.set_status("serving", now)

    def relocate(self, vehicle_id, target, seconds, now):
        v = self.vehicles[vehicle_id]
        if v.plan or v.onboard or v.relocation:
            self.violations.append(f"vehicle {vehicle_id} relocated while not idle")
            return
        if v.location == target:
            return
        v.relocation = (target, now, now + seconds)
        v.set_status("relocating", now)

    def all_completed(self):
        return all(st.status == "completed" for st in self.requests.values())

    def occupancy(self):
        loads = [self.load(v) for v in self.vehicles if v.onboard]
        return sum(loads) / len(loads) if loads else None


def initial_locations(fleet_size, n_locations, seed):
    """Evenly spaced over location ids, rotated by a seeded offset."""
    if fleet_size == 0:
        return []
    offset = int(np.random.default_rng(seed).integers(n_locations))
    return [(offset + (k * n_locations) // fleet_size) % n_locations for k in range(fleet_size)]


class _Relocator:
    def __init__(self, config: SimConfig, matrix, zone_map, trips, history, history_seconds):
        self.config = config
        self.matrix = matrix
        self.zone_map = zone_map
        self.trips = trips
        self.offset = history_seconds
        self.forecaster = None
        self.series = None
        self.diagnostics = {"relocations": 0, "vehicles_moved": 0, "moves_dropped": 0,
                            "forecast_unavailable": 0, "mpc_not_proven_optimal": 0}
        if config.mode == "forecast":
            self.series = aggregate_history(history or [], zone_map, config.relocation_seconds, config.capacity,
                                            n_periods=history_seconds // config.relocation_seconds,
                                            origin_weekday=config.origin_weekday)
            self.forecaster = VarForecaster(self.series, zone_map, config.k_max, config.forecast_scale,
                                            config.forecast_bin_seconds or None, config.order_selection)
            try:
                self.forecaster.fit()
            except ForecastUnavailable as exc:
                # without a model every relocation round is skipped, i.e. myopic behaviour
                log.warning("forecast unavailable (%s); running without relocation", exc)
        self.trace = open(config.trace_file, "w") if config.trace_file else None

    def observe(self, batch):
        if self.series is None:
            return
        zo = self.zone_map.zone_of
        for r in batch:
            self.series.record(self.offset + r.request_time, zo[r.origin], zo[r.destination])

    def demand(self, now):
        cfg = self.config
        Z, T = self.zone_map.n_zones, cfg.horizon
        if cfg.mode == "oracle":
            out = np.zeros((Z, Z, T), dtype=np.int64)
            for t in range(T):
                out[:, :, t] = oracle_forecast(self.trips, t, cfg.relocation_seconds, self.zone_map,
                                               cfg.capacity, offset=now)
            return out
        start = (self.offset + now) // cfg.relocation_seconds
        return self.forecaster.forecast(start, T)

    def __call__(self, state: FleetState, now):
        cfg = self.config
        try:
            lam = self.demand(now)
        except ForecastUnavailable as exc:
            log.warning("t=%d: no forecast (%s), skipping relocation", now, exc)
            self.diagnostics["forecast_unavailable"] += 1
            return
        Z = self.zone_map.n_zones
        if cfg.measured_sharing:
            w = measured_sharing(state.sharing_obs, Z, cfg.sharing_ratio)
        else:
            w = np.full((Z, Z), cfg.sharing_ratio)
        A, idle = estimate_idle(state.vehicles, self.zone_map, cfg.horizon, cfg.relocation_seconds, now)
        inp = MpcInput(lam.astype(float), w, A, np.asarray(self.zone_map.tt))
        sol = solve_mpc(inp, cfg.mpc_node_budget)
        plan = solve_vr(sol.moves_now(), idle, self.matrix, self.zone_map)
        for a in plan.assignments:
            state.relocate(a.vehicle, a.location, a.seconds, now)
        self.diagnostics["relocations"] += 1
        self.diagnostics["vehicles_moved"] += len(plan.assignments)
        self.diagnostics["moves_dropped"] += plan.dropped
        self.diagnostics["mpc_not_proven_optimal"] += int(not sol.optimal)
        if self.trace:
            rec = {"time": now, "demand": lam.tolist(), "available": A.tolist(), "sharing": w.tolist(),
                   "moves": sol.moves_now().tolist(), "objective": sol.objective,
                   "plan": [asdict(a) for a in plan.assignments], "dropped": plan.dropped}
            self.trace.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self):
        if self.trace:
            self.trace.close()


def _dump_epoch(directory, tau, pending, sol):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rec = {
        "epoch": tau, "requests": [r.id for r in pending], "pool_size": sol.pool_size,
        "lp_objective": sol.lp_objective, "lp_history": sol.lp_history, "objective": sol.objective,
        "unserved": sorted(sol.unserved),
        "routes": {str(v): [asdict(s) for s in r.stops] for v, r in sorted(sol.chosen.items())},
    }
    (d / f"epoch_{tau:06d}.json").write_text(json.dumps(rec, sort_keys=True) + "\n")


def run(trips, config: SimConfig, matrix: TravelTimeMatrix, zone_map: ZoneMap, history=None,
        history_seconds=None) -> SimulationReport:
    """Simulate the trip stream and return the full report.

    ``history`` holds earlier trips on their own clock ``[0, history_seconds)``;
    simulation time ``s`` corresponds to ``history_seconds + s`` on that clock,
    which keeps weekdays and hours consistent for forecasting. By default the
    history is taken to span whole days.
    """
    config.validate()
    trips = clean_trips(trips)
    if any(a.request_time > b.request_time for a, b in zip(trips, trips[1:])):
        raise ConfigurationError("trips must be sorted by request_time")
    if history_seconds is None:
        last = max((t.request_time for t in history or ()), default=-1)
        history_seconds = DAY * math.ceil((last + 1) / DAY)
    factory = RequestFactory(matrix, config.capacity, config.alpha, config.beta)
    requests = factory.make_all(trips)
    batcher = Batcher(requests, config.epoch_seconds)
    locs = initial_locations(config.fleet_size, len(matrix), config.seed)
    state = FleetState([Vehicle(k, loc, 0, config.capacity) for k, loc in enumerate(locs)], matrix)
    state.zone_of = zone_map.zone_of
    relocator = None if config.mode == "myopic" else _Relocator(config, matrix, zone_map, trips, history,
                                                                 history_seconds)
    params = config.dispatch_params()
    ell = config.epoch_seconds
    last_epoch = (requests[-1].request_time // ell + 1) if requests else 0
    max_epochs = config.max_epochs or last_epoch + DAY // ell
    epochs, occupancy = [], []
    tau = 0
    try:
        while True:
            tau += 1
            now = tau * ell
            state.advance(now)
            batch = batcher.take(tau)
            state.add_requests(batch)
            if relocator:
                relocator.observe(batch)
                if tau % config.relocation_every == 0:
                    relocator(state, now)
            pending = sorted(state.pending(config.freeze_scheduled), key=lambda r: r.id)
            rec = {"epoch": tau, "new": len(batch), "pending": len(pending)}
            if pending:
                snaps, kept = state.snapshot(now, config.freeze_scheduled, config.relocating_assignable)
                pens = {r.id: penalty(r.earliest_pickup, tau, ell, config.rho) for r in pending}
                sol = dispatch_epoch(snaps, pending, pens, matrix, params)
                state.commit(sol, snaps, kept, pending, now)
                if config.epoch_dump_dir:
                    _dump_epoch(config.epoch_dump_dir, tau, pending, sol)
                rec.update(objective=sol.objective, lp_objective=sol.lp_objective, lp_history=sol.lp_history,
                           pool_size=sol.pool_size, converged=sol.converged, mip_optimal=sol.mip_optimal,
                           unserved=len(sol.unserved))
            epochs.append(rec)
            occupancy.append(state.occupancy())
            if batcher.exhausted() and state.all_completed():
                break
            if tau >= max_epochs:
                left = sum(st.status != "completed" for st in state.requests.values())
                state.violations.append(f"service guarantee: {left} requests incomplete after {tau} epochs")
                break
    finally:
        if relocator:
            relocator.close()
    end = tau * ell
    for v in state.vehicles:
        v.set_status(v.status, end)
        if sum(v.seconds.values()) != end:
            state.violations.append(f"vehicle {v.id}: time accounting does not sum to {end}")
    return SimulationReport.build(state, zone_map, config, epochs, occupancy, end,
                                  relocator.diagnostics if relocator else {})
