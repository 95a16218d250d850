import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_mpc, brute_vr, hungarian_vr
from ridedispatch.network import build_grid
from ridedispatch.relocate import (
    MpcInput, _transport_lp, estimate_idle, measured_sharing, solve_mpc, solve_vr, stay_put_solution,
)

_, M, ZM = build_grid(4, 4, 60, 2, 2)


def veh(i, status, loc, free_time=0, free_loc=None):
    return SimpleNamespace(id=i, status=status, location=loc, free_time=free_time,
                           free_location=loc if free_loc is None else free_loc)


def test_idle_counts():
    fleet = [veh(i, "idle", 0) for i in range(5)]
    A, idle = estimate_idle(fleet, ZM, 3, 300, 0)
    assert A[0, 0] == 5 and A.sum() == 5
    assert [v for v, _ in idle[0]] == [0, 1, 2, 3, 4]


def test_busy_vehicle_counted_when_free():
    z2_loc = ZM.members[2][0]
    A, idle = estimate_idle([veh(0, "serving", 0, 400, z2_loc)], ZM, 3, 300, 0)
    assert A[2, 1] == 1 and A.sum() == 1 and not any(idle.values())


def test_relocating_vehicle_not_idle():
    A, idle = estimate_idle([veh(0, "relocating", 0, 120, 5)], ZM, 3, 300, 0)
    assert A[:, 0].sum() == 0 and not any(idle.values())


def test_beyond_horizon_ignored():
    A, _ = estimate_idle([veh(0, "serving", 0, 5000, 0)], ZM, 3, 300, 0)
    assert A.sum() == 0


def inp(demand, available, tt, sharing=None):
    demand = np.asarray(demand, dtype=float)
    Z = demand.shape[0]
    return MpcInput(demand, np.ones((Z, Z)) if sharing is None else np.asarray(sharing, float),
                    np.asarray(available), np.asarray(tt))


def test_mpc_trivial():
    s = solve_mpc(inp(np.zeros((1, 1, 1)), [[0]], [[0]]))
    assert s.objective == 0 and not s.x_r.any() and not s.u.any()


def test_mpc_two_zone_move():
    D = np.zeros((2, 2, 2))
    D[1, 0, 1] = 1
    s = solve_mpc(inp(D, [[1, 0], [0, 0]], [[0, 1], [1, 0]]))
    assert s.x_r[0, 1, 0] == 1
    assert s.x_p[1, 0, 1] == 1
    assert s.objective == 1
    assert s.moves_now().tolist() == [[0, 1], [0, 0]]


def test_sharing_ceiling():
    D = np.zeros((2, 2, 1))
    D[0, 1, 0] = 3
    assert inp(D, [[0], [0]], [[0, 1], [1, 0]], [[1, 2], [2, 1]]).vehicle_demand()[0, 1, 0] == 2


def _rand_mpc(rng, max_supply=3):
    Z = int(rng.integers(2, 5))
    T = int(rng.integers(1, 4))
    D = rng.integers(0, 3, (Z, Z, T))
    A = np.zeros((Z, T), dtype=int)
    for _ in range(int(rng.integers(0, max_supply + 1))):
        A[rng.integers(Z), rng.integers(T)] += 1
    tt = rng.integers(1, 3, (Z, Z))
    np.fill_diagonal(tt, 0)
    return D, A, tt


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mpc_matches_brute_force(seed):
    D, A, tt = _rand_mpc(np.random.default_rng(seed))
    s = solve_mpc(inp(D, A, tt))
    assert s.optimal
    assert s.objective == brute_mpc(D.tolist(), A.tolist(), tt.tolist(), D.shape[2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_zero_demand_means_no_moves(seed):
    rng = np.random.default_rng(seed)
    _, A, tt = _rand_mpc(rng, max_supply=8)
    Z, T = A.shape
    s = solve_mpc(inp(np.zeros((Z, Z, T)), A, tt))
    assert s.objective == 0 and not s.moves_now().any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_stay_put_is_feasible(seed):
    D, A, tt = _rand_mpc(np.random.default_rng(seed), max_supply=8)
    s = solve_mpc(inp(D, A, tt), node_budget=0)
    x = stay_put_solution(inp(D, A, tt))
    n = D.size
    assert s.objective <= float((np.repeat(np.arange(D.shape[2], 0, -1)[None], D.shape[0] ** 2, 0).ravel()
                                 * x[2 * n:]).sum()) + 1e-9


def test_vr_single_vehicle():
    plan = solve_vr(np.array([[0, 1, 0, 0]] + [[0] * 4] * 3), {0: [(7, 0)]}, M, ZM)
    (a,) = plan.assignments
    assert a.vehicle == 7 and a.zone == 1
    assert a.location in ZM.members[1] and a.seconds == M(0, a.location)


def test_vr_closer_vehicle_moves():
    # location 1 is one cell closer to zone 1 than location 0
    moves = np.zeros((4, 4), dtype=int)
    moves[0, 1] = 1
    plan = solve_vr(moves, {0: [(0, 0), (1, 1)]}, M, ZM)
    assert [a.vehicle for a in plan.assignments] == [1]


def test_vr_cost_matrix_example():
    y = _transport_lp(np.array([[1, 9], [2, 3], [8, 2]]), [1, 1])
    assert y.tolist() == [[1, 0], [0, 0], [0, 1]]
    assert brute_vr([[1, 9], [2, 3], [8, 2]], [1, 1]) == 3


def test_vr_more_moves_than_vehicles():
    moves = np.zeros((4, 4), dtype=int)
    moves[0, 1] = 2
    moves[0, 2] = 1
    plan = solve_vr(moves, {0: [(0, 0)]}, M, ZM)
    assert len(plan.assignments) == 1 and plan.dropped == 2
    assert solve_vr(moves, {}, M, ZM).dropped == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transport_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    nv, nj = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    costs = rng.integers(0, 200, (nv, nj))
    flows = list(rng.multinomial(int(rng.integers(0, nv + 1)), [1 / nj] * nj))
    y = _transport_lp(costs, flows)
    assert y.sum(axis=0).tolist() == flows and (y.sum(axis=1) <= 1).all()
    v = int((costs * y).sum())
    assert v == brute_vr(costs.tolist(), flows) == hungarian_vr(costs.tolist(), flows)


def test_measured_sharing():
    w = measured_sharing({(0, 1): [2] * 10, (1, 0): [3] * 3}, 2)
    assert w.tolist() == [[1.2, 2.0], [1.2, 1.2]]
