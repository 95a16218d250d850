"""Per-epoch dial-a-ride optimisation by column generation.

Columns are vehicle routes. The restricted master problem selects at most
one route per vehicle and pays a penalty for every request left out; the
pricing step enumerates routes exhaustively (iterative deepening on the
number of new stops) and returns those with negative reduced cost.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix

from .lp import branch_and_bound, solve_lp
from .network import TravelTimeMatrix

log = logging.getLogger(__name__)

PICKUP = "pickup"
DROPOFF = "dropoff"


@dataclass(frozen=True)
class Rider:
    request_id: int
    dropoff: int
    elapsed_ride: int
    max_ride: int
    riders: int = 1


@dataclass(frozen=True)
class VehicleSnapshot:
    id: int
    start_location: int
    earliest_departure: int
    capacity: int
    onboard: tuple = ()
    # reference instant for elapsed_ride; None means earliest_departure
    epoch_start: int | None = None

    @property
    def load(self) -> int:
        return sum(r.riders for r in self.onboard)

    def picked_at(self, rider: Rider) -> int:
        ref = self.earliest_departure if self.epoch_start is None else self.epoch_start
        return ref - rider.elapsed_ride


@dataclass(frozen=True)
class Stop:
    location: int
    action: str
    request_id: int
    time: int


@dataclass(frozen=True)
class Route:
    vehicle: int
    stops: tuple
    cost: int
    served: frozenset

    def sort_key(self):
        return tuple((s.time, s.location, s.request_id) for s in self.stops)


@dataclass
class DispatchParams:
    max_stops: int = 8
    epsilon: float = 1e-6
    cg_max_iterations: int = 50
    pricing_node_budget: int = 200_000
    mip_node_budget: int = 5_000
    close_gap: bool = True
    # cheap first pricing phase over short routes; exact pricing takes over once it stalls
    warm_max_stops: int = 4
    warm_node_budget: int = 20_000
    columns_per_vehicle: int = 50


@dataclass
class DispatchSolution:
    chosen: dict  # vehicle id -> Route
    unserved: frozenset
    objective: float
    lp_objective: float = float("nan")
    lp_history: list = field(default_factory=list)
    pool_size: int = 0
    converged: bool = True
    mip_optimal: bool = True


def penalty(earliest_pickup, epoch, epoch_seconds, rho=420.0) -> float:
    """Penalty for leaving a request unserved at ``epoch``; doubles every ten epochs."""
    return rho * 2.0 ** ((epoch * epoch_seconds - earliest_pickup) / (10.0 * epoch_seconds))


def route_waiting_cost(route: Route, requests) -> int:
    """Total wait (pickup time minus earliest pickup) over requests picked up on the route."""
    e = {r.id: r.earliest_pickup for r in requests}
    return sum(s.time - e[s.request_id] for s in route.stops if s.action == PICKUP)


def check_route(route: Route, vehicle: VehicleSnapshot, requests, matrix: TravelTimeMatrix):
    """Return a list of violated route invariants (empty when the route is feasible)."""
    by_id = {r.id: r for r in requests}
    problems = []
    loc, t = vehicle.start_location, vehicle.earliest_departure
    load = vehicle.load
    picked = {}
    open_onboard = {r.request_id: r for r in vehicle.onboard}
    for s in route.stops:
        arrive = t + matrix(loc, s.location)
        if s.action == PICKUP:
            req = by_id[s.request_id]
            if s.location != req.origin or s.time != max(arrive, req.earliest_pickup):
                problems.append(f"bad pickup time/location for request {req.id}")
            load += req.riders
            if load > vehicle.capacity:
                problems.append(f"capacity exceeded after picking up {req.id}")
            picked[req.id] = s.time
        else:
            if s.time != arrive:
                problems.append(f"bad dropoff time for request {s.request_id}")
            if s.request_id in open_onboard:
                rider = open_onboard.pop(s.request_id)
                if s.location != rider.dropoff:
                    problems.append(f"onboard rider {rider.request_id} dropped at wrong location")
                if s.time - vehicle.picked_at(rider) > rider.max_ride:
                    problems.append(f"ride duration exceeded for onboard rider {rider.request_id}")
                load -= rider.riders
            elif s.request_id in picked:
                req = by_id[s.request_id]
                if s.location != req.destination:
                    problems.append(f"request {req.id} dropped at wrong location")
                if s.time - picked.pop(req.id) > req.max_ride:
                    problems.append(f"ride duration exceeded for request {req.id}")
                load -= req.riders
            else:
                problems.append(f"dropoff before pickup for request {s.request_id}")
        loc, t = s.location, s.time
    if open_onboard or picked:
        problems.append("route ends with riders still onboard")
    served = frozenset(s.request_id for s in route.stops if s.action == PICKUP)
    if served != route.served:
        problems.append("served set does not match pickups")
    return problems


class _Budget(Exception):
    pass


def _enumerate(vehicle, requests, matrix, mu, nu, depths, threshold, node_budget, prune_filter=True):
    """Depth-limited exhaustive route search.

    Returns ({served bitmask: (reduced cost, key, stops, cost)}, exhausted).
    ``depths`` are the numbers of new-request stops to search, in order.
    Only the cheapest route per served set is kept (ties: smaller key).
    """
    tab = matrix.table
    metric = matrix.metric
    cap = vehicle.capacity
    dep = vehicle.earliest_departure
    start = vehicle.start_location
    n = len(requests)
    org = [r.origin for r in requests]
    dst = [r.destination for r in requests]
    ear = [r.earliest_pickup for r in requests]
    mxr = [r.max_ride for r in requests]
    wgt = [r.riders for r in requests]
    rid = [r.id for r in requests]
    mus = [mu.get(r.id, 0.0) for r in requests]

    # Dropping a request that can only add more wait than its dual pays for never
    # yields a better column; valid on metric matrices when no pickup has to wait.
    cands = list(range(n))
    if prune_filter and metric and all(e <= dep for e in ear):
        floor = max(threshold, 0.0)
        cands = [j for j in cands if max(0, dep + tab[start][org[j]] - ear[j]) - mus[j] <= floor]

    onboard0 = tuple(
        (r.dropoff, vehicle.picked_at(r) + r.max_ride, r.riders, -1 - k)
        for k, r in enumerate(vehicle.onboard)
    )
    onboard_ids = [r.request_id for r in vehicle.onboard]
    best = {}
    state = {"nodes": 0}

    def tag_id(tag):
        return rid[tag] if tag >= 0 else onboard_ids[-1 - tag]

    def record(mask, cost, mu_sum, seq):
        rc = cost - nu - mu_sum
        if rc >= threshold:
            return
        key = tuple((t, loc, tag_id(tag)) for t, loc, tag, _ in seq)
        cur = best.get(mask)
        if cur is None or rc < cur[0] - 1e-12 or (abs(rc - cur[0]) <= 1e-12 and key < cur[1]):
            best[mask] = (rc, key, list(seq), cost)

    def dfs(limit, loc, t, load, onboard, mask, cost, mu_sum, used, seq):
        state["nodes"] += 1
        if state["nodes"] > node_budget:
            raise _Budget
        open_new = sum(1 for item in onboard if item[3] >= 0)
        if not onboard and used == limit:
            record(mask, cost, mu_sum, seq)
            return
        picks_left = (limit - used - open_new) // 2
        # lower bound on the reduced cost of any completion at this depth
        if picks_left:
            gains = []
            for j in cands:
                if not mask >> j & 1:
                    lbw = max(0, t + tab[loc][org[j]] - ear[j]) if metric else 0
                    gains.append(lbw - mus[j])
            if len(gains) < picks_left:
                return
            gains.sort()
            lb = cost - nu - mu_sum + sum(gains[:picks_left])
        else:
            lb = cost - nu - mu_sum
        if lb >= threshold:
            return

        for k, (drop, deadline, w, tag) in enumerate(onboard):
            arrive = t + tab[loc][drop]
            if arrive > deadline:
                continue
            rest = onboard[:k] + onboard[k + 1 :]
            if metric and any(arrive + tab[drop][o[0]] > o[1] for o in rest):
                continue
            seq.append((arrive, drop, tag, DROPOFF))
            dfs(limit, drop, arrive, load - w, rest, mask, cost, mu_sum, used + (tag >= 0), seq)
            seq.pop()

        if picks_left:
            for j in cands:
                if mask >> j & 1 or load + wgt[j] > cap:
                    continue
                o = org[j]
                pt = max(t + tab[loc][o], ear[j])
                if metric and any(pt + tab[o][item[0]] > item[1] for item in onboard):
                    continue
                seq.append((pt, o, j, PICKUP))
                dfs(
                    limit, o, pt, load + wgt[j], onboard + ((dst[j], pt + mxr[j], wgt[j], j),),
                    mask | (1 << j), cost + pt - ear[j], mu_sum + mus[j], used + 1, seq,
                )
                seq.pop()

    exhausted = False
    try:
        for limit in depths:
            dfs(limit, start, dep, vehicle.load, onboard0, 0, 0, 0.0, 0, [])
    except _Budget:
        exhausted = True
    return best, exhausted


def _to_route(vehicle, requests, onboard_ids, entry) -> Route:
    _, _, seq, cost = entry
    stops = []
    for t, loc, tag, action in seq:
        req_id = requests[tag].id if tag >= 0 else onboard_ids[-1 - tag]
        stops.append(Stop(loc, action, req_id, t))
    served = frozenset(s.request_id for s in stops if s.action == PICKUP)
    return Route(vehicle.id, tuple(stops), int(cost), served)


def enumerate_best_routes(vehicle, requests, matrix, duals=None, max_stops=8,
                          threshold=-1e-6, node_budget=200_000, include_base=True,
                          prune_filter=True):
    """Cheapest route per served request set with reduced cost below ``threshold``."""
    mu, nu = duals if duals is not None else ({}, 0.0)
    depths = ([0] if include_base else []) + list(range(2, max_stops + 1, 2))
    best, exhausted = _enumerate(vehicle, requests, matrix, mu, nu, depths, threshold,
                                 node_budget, prune_filter)
    onboard_ids = [r.request_id for r in vehicle.onboard]
    routes = [_to_route(vehicle, requests, onboard_ids, entry) for entry in best.values()]
    routes.sort(key=lambda r: (len(r.served), r.sort_key()))
    return routes, exhausted


def reduced_cost(route: Route, duals) -> float:
    mu, nu = duals
    return route.cost - nu - sum(mu.get(i, 0.0) for i in route.served)


def price_routes(vehicle, requests, duals, matrix, max_stops=8, time_budget=200_000, epsilon=1e-6,
                 limit=None, dominance=False):
    """Routes for ``vehicle`` whose reduced cost is below ``-epsilon``.

    ``duals`` is ``(mu, nu)``: a mapping request id -> dual of its covering
    row and the scalar dual of the vehicle's convexity row. ``time_budget``
    counts search nodes; when it runs out the routes found so far are returned.
    ``limit`` keeps only that many routes, most negative reduced cost first.
    ``dominance`` skips requests whose cheapest possible wait exceeds their dual;
    every route it loses has a strictly cheaper improving route without that
    request, so column generation still converges to the same bound.
    """
    routes, _ = enumerate_best_routes(vehicle, requests, matrix, duals, max_stops,
                                      -epsilon, time_budget, prune_filter=dominance)
    if limit is not None and len(routes) > limit:
        routes.sort(key=lambda r: (reduced_cost(r, duals), len(r.served), r.sort_key()))
        routes = routes[:limit]
    return routes


def base_route(vehicle, matrix) -> Route:
    """Cheapest way to drop off the riders already aboard, serving no new request."""
    routes, _ = enumerate_best_routes(vehicle, [], matrix, None, 0, float("inf"), 1_000_000)
    if routes:
        return routes[0]
    # Not reachable from a consistent fleet state on a metric matrix.
    log.warning("vehicle %d: no ride-feasible dropoff order, keeping given order", vehicle.id)
    stops, loc, t = [], vehicle.start_location, vehicle.earliest_departure
    for r in vehicle.onboard:
        t += matrix(loc, r.dropoff)
        loc = r.dropoff
        stops.append(Stop(loc, DROPOFF, r.request_id, t))
    return Route(vehicle.id, tuple(stops), 0, frozenset())


def insertion_routes(vehicle, requests, matrix, node_budget=50_000) -> list[Route]:
    """Best single-request route for each request the vehicle can serve."""
    routes, _ = enumerate_best_routes(vehicle, requests, matrix, None, 2, float("inf"),
                                      node_budget, include_base=False, prune_filter=False)
    return routes


@dataclass
class RmpLP:
    y: np.ndarray
    z: np.ndarray
    mu: dict
    nu: dict
    objective: float


def _rmp_arrays(routes, requests, vehicles, penalties):
    req_row = {r.id: i for i, r in enumerate(requests)}
    veh_row = {v.id: len(requests) + k for k, v in enumerate(vehicles)}
    rows, cols = [], []
    for col, route in enumerate(routes):
        for rid in route.served:
            rows.append(req_row[rid])
            cols.append(col)
        rows.append(veh_row[route.vehicle])
        cols.append(col)
    nr, nz = len(routes), len(requests)
    for i in range(nz):
        rows.append(i)
        cols.append(nr + i)
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nz + len(vehicles), nr + nz)).tocsr()
    b = np.ones(nz + len(vehicles))
    c = np.array([r.cost for r in routes] + [penalties[r.id] for r in requests], dtype=float)
    return c, A, b


def _check_pool(routes, vehicles):
    have = {r.vehicle for r in routes if not r.served}
    missing = [v.id for v in vehicles if v.id not in have]
    if missing:
        raise RuntimeError(f"column pool lacks a request-free route for vehicles {missing}")


def solve_rmp_lp(routes, requests, vehicles, penalties) -> RmpLP:
    """Linear relaxation of the route-selection master problem, with duals."""
    _check_pool(routes, vehicles)
    c, A, b = _rmp_arrays(routes, requests, vehicles, penalties)
    lp = solve_lp(c, A, b)
    if lp is None:
        raise RuntimeError("restricted master LP infeasible")
    nr, nz = len(routes), len(requests)
    mu = {r.id: float(lp.duals[i]) for i, r in enumerate(requests)}
    nu = {v.id: float(lp.duals[nz + k]) for k, v in enumerate(vehicles)}
    return RmpLP(lp.x[:nr], lp.x[nr:], mu, nu, lp.objective)


def solve_final_mip(routes, requests, vehicles, penalties, time_budget=5_000) -> DispatchSolution:
    """Integer route selection over the pool by branch-and-bound on the route variables."""
    _check_pool(routes, vehicles)
    c, A, b = _rmp_arrays(routes, requests, vehicles, penalties)
    nr, nz = len(routes), len(requests)
    incumbent = np.zeros(nr + nz)
    seen = set()
    for col, r in enumerate(routes):
        if not r.served and r.vehicle not in seen:
            seen.add(r.vehicle)
            incumbent[col] = 1.0
    incumbent[nr:] = 1.0
    integer = np.zeros(nr + nz, dtype=bool)
    integer[:nr] = True
    res = branch_and_bound(c, A, b, integer, incumbent=incumbent, node_budget=time_budget,
                           upper=np.ones(nr + nz))
    y = res.x[:nr]
    chosen = {}
    for col in np.flatnonzero(y > 0.5):
        chosen[routes[col].vehicle] = routes[col]
    served = set().union(*(r.served for r in chosen.values())) if chosen else set()
    unserved = frozenset(r.id for r in requests if r.id not in served)
    objective = sum(r.cost for r in chosen.values()) + sum(penalties[i] for i in unserved)
    return DispatchSolution(chosen, unserved, float(objective), mip_optimal=res.optimal)


class ColumnPool:
    def __init__(self):
        self.by_key = {}
        self._sorted = None

    def add(self, route: Route) -> bool:
        """Keep the cheapest route per (vehicle, served set); True if the pool improved."""
        key = (route.vehicle, route.served)
        cur = self.by_key.get(key)
        if cur is None or route.cost < cur.cost:
            self.by_key[key] = route
            self._sorted = None
            return True
        if route.cost == cur.cost and route.sort_key() < cur.sort_key():
            self.by_key[key] = route
            self._sorted = None
        return False

    def routes(self) -> list[Route]:
        if self._sorted is None:
            self._sorted = sorted(self.by_key.values(),
                                  key=lambda r: (r.vehicle, len(r.served), sorted(r.served), r.sort_key()))
        return self._sorted

    def __len__(self):
        return len(self.by_key)


def dispatch_epoch(vehicles, requests, penalties, matrix, params: DispatchParams | None = None) -> DispatchSolution:
    """Column generation followed by an integer solve over the generated routes.

    ``penalties`` maps request id -> penalty for leaving it unserved this epoch.
    When column generation converges and the integer optimum over the pool
    is above the LP bound, every route whose reduced cost is within that gap
    is added before a final integer solve; any better integer solution can
    only use such routes, so the result is then optimal over all routes.
    """
    params = params or DispatchParams()
    vehicles = sorted(vehicles, key=lambda v: v.id)
    requests = sorted(requests, key=lambda r: r.id)
    pool = ColumnPool()
    for v in vehicles:
        pool.add(base_route(v, matrix))
        for r in insertion_routes(v, requests, matrix):
            pool.add(r)

    phases = [(params.max_stops, params.pricing_node_budget)]
    if params.warm_max_stops < params.max_stops:
        phases.insert(0, (params.warm_max_stops, params.warm_node_budget))
    phase = 0
    history = []
    converged = False
    lp = None
    for _ in range(params.cg_max_iterations):
        lp = solve_rmp_lp(pool.routes(), requests, vehicles, penalties)
        history.append(lp.objective)
        while True:
            stops, budget = phases[phase]
            added = 0
            for v in vehicles:
                for r in price_routes(v, requests, (lp.mu, lp.nu[v.id]), matrix, stops, budget,
                                      params.epsilon, params.columns_per_vehicle, dominance=True):
                    added += pool.add(r)
            if added or phase == len(phases) - 1:
                break
            phase += 1
        if not added:
            converged = True
            break
    if not converged:
        lp = solve_rmp_lp(pool.routes(), requests, vehicles, penalties)
        history.append(lp.objective)

    sol = solve_final_mip(pool.routes(), requests, vehicles, penalties, params.mip_node_budget)
    gap = sol.objective - lp.objective
    if converged and params.close_gap and gap > params.epsilon:
        added = 0
        for v in vehicles:
            routes, _ = enumerate_best_routes(v, requests, matrix, (lp.mu, lp.nu[v.id]),
                                              params.max_stops, gap + params.epsilon,
                                              params.pricing_node_budget)
            for r in routes:
                added += pool.add(r)
        if added:
            lp = solve_rmp_lp(pool.routes(), requests, vehicles, penalties)
            history.append(lp.objective)
            sol = solve_final_mip(pool.routes(), requests, vehicles, penalties, params.mip_node_budget)

    sol.lp_objective = lp.objective
    sol.lp_history = history
    sol.pool_size = len(pool)
    sol.converged = converged
    return sol
