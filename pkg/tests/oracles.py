"""Brute-force reference solvers used only by the tests.

These deliberately share no code with the package's solvers.
"""

import itertools
from functools import lru_cache

import numpy as np

from ridedispatch.dispatch import Rider, VehicleSnapshot
from ridedispatch.demand import Request


def brute_route_costs(vehicle, requests, tt, max_new):
    """Cheapest waiting cost for every request set a vehicle can serve.

    Tries every ordering of pickup/dropoff events and keeps the ride-feasible,
    capacity-feasible ones. ``tt(a, b)`` gives travel seconds.
    """
    best = {}
    for size in range(0, max_new + 1):
        for subset in itertools.combinations(requests, size):
            events = [("p", r) for r in subset] + [("d", r) for r in subset]
            events += [("o", rider) for rider in vehicle.onboard]
            for perm in itertools.permutations(range(len(events))):
                seq = [events[i] for i in perm]
                cost = _simulate(vehicle, seq, tt)
                if cost is None:
                    continue
                key = frozenset(r.id for r in subset)
                if key not in best or cost < best[key]:
                    best[key] = cost
    return best


def _simulate(vehicle, seq, tt):
    loc, t = vehicle.start_location, vehicle.earliest_departure
    ref = vehicle.earliest_departure if vehicle.epoch_start is None else vehicle.epoch_start
    load = sum(r.riders for r in vehicle.onboard)
    picked = {}
    cost = 0
    for kind, item in seq:
        if kind == "p":
            t = max(t + tt(loc, item.origin), item.earliest_pickup)
            loc = item.origin
            load += item.riders
            if load > vehicle.capacity:
                return None
            picked[item.id] = t
            cost += t - item.earliest_pickup
        elif kind == "d":
            if item.id not in picked:
                return None
            t += tt(loc, item.destination)
            loc = item.destination
            if t - picked[item.id] > item.max_ride:
                return None
            load -= item.riders
        else:
            t += tt(loc, item.dropoff)
            loc = item.dropoff
            if t - (ref - item.elapsed_ride) > item.max_ride:
                return None
            load -= item.riders
    return cost


def brute_dispatch_optimum(vehicles, requests, penalties, tt, max_new):
    """Exhaustive optimum of route selection: one route set per vehicle, disjoint."""
    options = [sorted(brute_route_costs(v, requests, tt, max_new).items(), key=lambda kv: sorted(kv[0]))
               for v in vehicles]
    if any(not opts for opts in options):
        return None
    best = float("inf")
    for combo in itertools.product(*options):
        covered = set()
        ok = True
        cost = 0.0
        for served, c in combo:
            if covered & served:
                ok = False
                break
            covered |= served
            cost += c
        if not ok:
            continue
        cost += sum(penalties[r.id] for r in requests if r.id not in covered)
        best = min(best, cost)
    return best


def random_dispatch_instance(rng, tt, n_locations, max_vehicles=3, max_requests=5, now=300):
    n_veh = int(rng.integers(1, max_vehicles + 1))
    n_req = int(rng.integers(0, max_requests + 1))
    requests = []
    for i in range(n_req):
        o, d = rng.choice(n_locations, size=2, replace=False)
        t_c = tt(int(o), int(d))
        e = now - int(rng.integers(0, 121))
        requests.append(Request(i, e, int(rng.integers(1, 4)), int(o), int(d), t_c,
                                max(int(1.5 * t_c), 240 + t_c), e))
    vehicles = []
    rid = 100
    for v in range(n_veh):
        onboard = []
        for _ in range(int(rng.integers(0, 3))):
            drop = int(rng.integers(n_locations))
            onboard.append(Rider(rid, drop, int(rng.integers(0, 60)), 240 + int(rng.integers(60, 200)), 1))
            rid += 1
        vehicles.append(VehicleSnapshot(v, int(rng.integers(n_locations)), now + int(rng.integers(0, 40)),
                                        4, tuple(onboard), epoch_start=now))
    penalties = {r.id: 420.0 * 2 ** ((now - r.earliest_pickup + float(rng.integers(0, 600))) / 300.0)
                 for r in requests}
    return vehicles, requests, penalties


def brute_vr(costs, flows):
    """Min-cost choice of which vehicle goes to which zone by full enumeration.

    ``costs[v][j]`` vehicle v to target j, ``flows[j]`` vehicles wanted at j.
    """
    n_v = len(costs)
    slots = [j for j, f in enumerate(flows) for _ in range(f)]
    best = float("inf")
    for chosen in itertools.permutations(range(n_v), len(slots)):
        best = min(best, sum(costs[v][j] for v, j in zip(chosen, slots)))
    return best


def brute_mpc(demand, supply, tt, T):
    """Exact MPC optimum by memoised search over per-period vehicle moves.

    ``demand[i][j][t]`` vehicle-equivalent demand, ``supply[i][t]`` vehicles
    appearing in zone i at period t. Vehicles staying put reappear next period.
    """
    Z = len(supply)

    def arrival(i, j):
        return max(1, int(tt[i][j]))

    @lru_cache(maxsize=None)
    def solve(t, backlog, pending):
        # backlog: tuple over (i,j) of unserved demand before period t's new demand
        # pending: tuple over (zone, period) of vehicles arriving later
        if t == T:
            return 0
        back = list(backlog)
        for i in range(Z):
            for j in range(Z):
                back[i * Z + j] += demand[i][j][t]
        avail = [supply[i][t] + pending[i * T + t] for i in range(Z)]
        best = float("inf")
        for moves in _zone_moves(avail, back, Z):
            nb = back[:]
            npend = list(pending)
            cost = 0
            for i, choices in enumerate(moves):
                for kind, j in choices:
                    if kind == "p":
                        nb[i * Z + j] -= 1
                    else:
                        cost += int(tt[i][j])
                    a = t + arrival(i, j)
                    if a < T:
                        npend[j * T + a] += 1
            cost += sum((T - t) * u for u in nb)
            best = min(best, cost + solve(t + 1, tuple(nb), tuple(npend)))
        return best

    return solve(0, tuple([0] * (Z * Z)), tuple([0] * (Z * T)))


def _zone_moves(avail, back, Z):
    per_zone = []
    for i in range(Z):
        opts = [("r", j) for j in range(Z)] + [("p", j) for j in range(Z) if back[i * Z + j] > 0]
        combos = []
        for multiset in itertools.combinations_with_replacement(opts, avail[i]):
            ok = all(sum(1 for m in multiset if m == ("p", j)) <= back[i * Z + j] for j in range(Z))
            if ok:
                combos.append(multiset)
        per_zone.append(combos)
    return itertools.product(*per_zone)


def hungarian_vr(costs, flows):
    from scipy.optimize import linear_sum_assignment

    slots = [j for j, f in enumerate(flows) for _ in range(f)]
    if not slots:
        return 0
    mat = np.array([[costs[v][j] for j in slots] for v in range(len(costs))], dtype=float)
    r, c = linear_sum_assignment(mat)
    return float(mat[r, c].sum())
