"""Idle-vehicle relocation in two steps.

First a zone-level integer program over a short horizon of relocation
periods decides how many empty vehicles should move between zones now;
then, per origin zone, a small transportation problem picks which idle
vehicles make those moves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix

from .lp import INT_TOL, branch_and_bound, solve_lp
from .network import TravelTimeMatrix, ZoneMap

log = logging.getLogger(__name__)


@dataclass
class MpcInput:
    demand: np.ndarray  # forecast requests, zones x zones x periods
    sharing: np.ndarray  # riders per occupied vehicle, zones x zones, >= 1
    available: np.ndarray  # vehicles becoming available, zones x periods; column 0 = idle now
    tt: np.ndarray  # zone-to-zone travel in whole periods

    @property
    def horizon(self) -> int:
        return self.demand.shape[2]

    @property
    def n_zones(self) -> int:
        return self.demand.shape[0]

    def vehicle_demand(self) -> np.ndarray:
        """Demand expressed in vehicles: ceil(requests / sharing ratio)."""
        ratio = self.demand / self.sharing[:, :, None]
        return np.ceil(ratio - 1e-9).astype(np.int64)


@dataclass
class MpcSolution:
    x_r: np.ndarray  # empty-vehicle moves
    x_p: np.ndarray  # vehicles carrying passengers
    u: np.ndarray  # unserved vehicle-demand carried over
    objective: float
    optimal: bool = True

    def moves_now(self) -> np.ndarray:
        """Off-diagonal empty moves starting in period 0; the diagonal means staying put."""
        m = self.x_r[:, :, 0].copy()
        np.fill_diagonal(m, 0)
        return m


def arrival_offset(tt_ij: int) -> int:
    # a vehicle staying in its zone still occupies the current period
    return max(1, int(tt_ij))


def estimate_idle(fleet, zone_map: ZoneMap, horizon: int, period_seconds: int, now: int):
    """Vehicles available per zone and period, plus the concrete idle list per zone.

    ``fleet`` yields objects with ``id``, ``status`` ('idle', 'serving' or
    'relocating'), ``location``, ``free_time`` and ``free_location`` (when and
    where the committed plan ends). Column 0 counts vehicles idle now;
    column t >= 1 counts vehicles whose plan ends in period t, with those
    freeing up during period 0 joining at period 1 (they are not idle yet).
    """
    A = np.zeros((zone_map.n_zones, horizon), dtype=np.int64)
    idle = {z: [] for z in range(zone_map.n_zones)}
    for v in fleet:
        if v.status == "idle":
            z = zone_map.zone_of[v.location]
            A[z, 0] += 1
            idle[z].append((v.id, v.location))
            continue
        p = max(1, (v.free_time - now) // period_seconds)
        if p < horizon:
            A[zone_map.zone_of[v.free_location], p] += 1
    return A, idle


def _index(Z, T):
    n = Z * Z * T

    def idx(kind, i, j, t):
        return kind * n + (i * Z + j) * T + t

    return idx, 3 * n


XR, XP, U = 0, 1, 2


def stay_put_solution(inp: MpcInput) -> np.ndarray:
    """Feasible point with no moves at all: everyone waits, all demand accumulates."""
    Z, T = inp.n_zones, inp.horizon
    idx, nvar = _index(Z, T)
    D = inp.vehicle_demand()
    x = np.zeros(nvar)
    for i in range(Z):
        stock = 0
        for t in range(T):
            stock += int(inp.available[i, t])
            x[idx(XR, i, i, t)] = stock
    for i in range(Z):
        for j in range(Z):
            acc = 0
            for t in range(T):
                acc += int(D[i, j, t])
                x[idx(U, i, j, t)] = acc
    return x


def solve_mpc(inp: MpcInput, node_budget=2_000) -> MpcSolution:
    """Zone rebalancing over the horizon by branch-and-bound on the LP relaxation.

    Objective: sum over periods of (T - t) * unserved + tt_ij * empty moves.
    Flows leaving zone j for i at period t arrive at t + max(1, tt_ji);
    flows that would arrive beyond the horizon simply leave the model.
    """
    Z, T = inp.n_zones, inp.horizon
    idx, nvar = _index(Z, T)
    D = inp.vehicle_demand()
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for i in range(Z):
        for j in range(Z):
            for t in range(T):
                rows += [r, r]
                cols += [idx(XP, i, j, t), idx(U, i, j, t)]
                vals += [1.0, 1.0]
                if t > 0:
                    rows.append(r)
                    cols.append(idx(U, i, j, t - 1))
                    vals.append(-1.0)
                rhs.append(float(D[i, j, t]))
                r += 1
    for i in range(Z):
        for t in range(T):
            for j in range(Z):
                for kind in (XP, XR):
                    rows.append(r)
                    cols.append(idx(kind, i, j, t))
                    vals.append(1.0)
            for j in range(Z):
                s = t - arrival_offset(inp.tt[j, i])
                if s >= 0:
                    for kind in (XP, XR):
                        rows.append(r)
                        cols.append(idx(kind, j, i, s))
                        vals.append(-1.0)
            rhs.append(float(inp.available[i, t]))
            r += 1
    A = coo_matrix((vals, (rows, cols)), shape=(r, nvar)).tocsr()
    b = np.array(rhs)
    c = np.zeros(nvar)
    for i in range(Z):
        for j in range(Z):
            for t in range(T):
                c[idx(U, i, j, t)] = T - t
                c[idx(XR, i, j, t)] = inp.tt[i, j]
    # Among equal-cost plans prefer the one leaving the least demand unserved.
    # Costs are integers and the total unserved is below 1 / tie, so this never
    # changes which objective value is optimal.
    tie = 1.0 / (float(D.sum()) * T + 2.0)
    c_tie = c.copy()
    c_tie[2 * Z * Z * T :] += tie
    res = branch_and_bound(c_tie, A, b, np.ones(nvar, dtype=bool), incumbent=stay_put_solution(inp),
                           node_budget=node_budget)
    x = np.round(res.x).astype(np.int64)
    if np.abs(A @ x - b).max() > 0:
        raise AssertionError("MPC solution violates a balance constraint")
    shape = (Z, Z, T)
    n = Z * Z * T
    return MpcSolution(
        x_r=x[:n].reshape(shape), x_p=x[n : 2 * n].reshape(shape), u=x[2 * n :].reshape(shape),
        objective=float(c @ x), optimal=res.optimal,
    )


@dataclass(frozen=True)
class Assignment:
    vehicle: int
    zone: int
    location: int
    seconds: int


@dataclass
class RelocationPlan:
    assignments: list = field(default_factory=list)
    objective: int = 0
    dropped: int = 0  # requested moves that had no idle vehicle to realise them


def closest_stop(matrix: TravelTimeMatrix, location: int, members) -> tuple[int, int]:
    """(seconds, location) of the nearest member; ties go to the lower location id."""
    row = matrix.table[location]
    return min((row[m], m) for m in members)


def _transport_lp(costs, flows):
    """Min-cost assignment of vehicles to zone slots as an LP; integral by total unimodularity."""
    n_v, n_j = costs.shape
    nv = n_v * n_j
    rows, cols = [], []
    for j in range(n_j):
        for v in range(n_v):
            rows.append(j)
            cols.append(v * n_j + j)
    for v in range(n_v):
        for j in range(n_j):
            rows.append(n_j + v)
            cols.append(v * n_j + j)
        rows.append(n_j + v)
        cols.append(nv + v)  # slack: vehicle stays
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_j + n_v, nv + n_v)).tocsr()
    b = np.concatenate([np.asarray(flows, dtype=float), np.ones(n_v)])
    c = np.concatenate([costs.ravel().astype(float), np.zeros(n_v)])
    lp = solve_lp(c, A, b)
    y = lp.x[:nv].reshape(n_v, n_j)
    if np.abs(y - np.round(y)).max() > INT_TOL:
        raise AssertionError("vehicle relocation LP returned a fractional vertex")
    return np.round(y).astype(np.int64)


def solve_vr(moves, idle, matrix: TravelTimeMatrix, zone_map: ZoneMap) -> RelocationPlan:
    """Pick concrete idle vehicles for the requested zone-to-zone moves.

    ``moves[i, j]`` empty vehicles wanted from zone i to zone j (diagonal ignored);
    ``idle[i]`` lists ``(vehicle id, location)`` of idle vehicles in zone i.
    Each vehicle goes to the closest stop of its target zone.
    """
    plan = RelocationPlan()
    Z = zone_map.n_zones
    for i in range(Z):
        targets = [j for j in range(Z) if j != i and moves[i, j] > 0]
        if not targets or not idle.get(i):
            if targets:
                plan.dropped += int(sum(moves[i, j] for j in targets))
            continue
        vehicles = sorted(idle[i])
        near = [[closest_stop(matrix, loc, zone_map.members[j]) for j in targets] for _, loc in vehicles]
        costs = np.array([[c for c, _ in row] for row in near], dtype=np.int64)
        flows = [int(moves[i, j]) for j in targets]
        if sum(flows) > len(vehicles):
            log.warning("zone %d: %d moves requested, %d idle vehicles", i, sum(flows), len(vehicles))
            plan.dropped += sum(flows) - len(vehicles)
            slots = [k for k, f in enumerate(flows) for _ in range(f)]
            r, cidx = linear_sum_assignment(costs[:, slots])
            y = np.zeros_like(costs)
            for v, s in zip(r, cidx):
                y[v, slots[s]] = 1
        else:
            y = _transport_lp(costs, flows)
        for v, k in zip(*np.nonzero(y)):
            secs, loc = near[v][k]
            plan.assignments.append(Assignment(vehicles[v][0], targets[k], loc, int(secs)))
            plan.objective += int(secs)
    plan.assignments.sort(key=lambda a: a.vehicle)
    return plan


def measured_sharing(history, n_zones, fallback=1.2, min_obs=10) -> np.ndarray:
    """Trailing mean riders per occupied vehicle per zone pair.

    ``history`` maps (i, j) to a list of observed occupancies; pairs with fewer
    than ``min_obs`` observations use ``fallback``.
    """
    w = np.full((n_zones, n_zones), float(fallback))
    for (i, j), obs in history.items():
        if len(obs) >= min_obs:
            w[i, j] = max(1.0, float(np.mean(obs)))
    return w
