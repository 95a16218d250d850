"""Acceptance suite: one test per criterion, each recorded as PASS/FAIL in the terminal summary."""

import itertools
import time

import numpy as np
import pytest

from oracles import brute_dispatch_optimum, brute_mpc, brute_vr, random_dispatch_instance
from ridedispatch.dispatch import DispatchParams, check_route, dispatch_epoch, penalty
from ridedispatch.engine import SimConfig, run
from ridedispatch.forecast import DifferencedSeries, fit_var_system
from ridedispatch.network import build_grid
from ridedispatch.relocate import MpcInput, solve_mpc, solve_vr
from ridedispatch.scenarios import hot_zone_scenario, run_modes, uniform_trips

pytestmark = pytest.mark.slow


def test_dispatch_matches_exhaustive_optimum(criterion):
    _, M, _ = build_grid(4, 4, 60, 2, 2)
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    n = mismatches = infeasible = 0
    while n < 200:
        vehicles, requests, pens = random_dispatch_instance(rng, M, 16)
        ref = brute_dispatch_optimum(vehicles, requests, pens, M, 2)
        if ref is None:
            # onboard riders that cannot all be delivered in time; not a dispatch instance
            continue
        n += 1
        sol = dispatch_epoch(vehicles, requests, pens, M, DispatchParams(max_stops=4))
        by_id = {v.id: v for v in vehicles}
        infeasible += sum(bool(check_route(r, by_id[v], requests, M)) for v, r in sol.chosen.items())
        mismatches += sol.objective != pytest.approx(ref, rel=0, abs=1e-9)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and infeasible == 0 and elapsed < 60
    criterion(1, "dispatch oracle equivalence", ok,
              f"{n} instances, {mismatches} mismatches, {infeasible} infeasible routes, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def feasibility_run():
    _, M, Z = build_grid(10, 10, 30, 2, 2)
    trips = uniform_trips(len(M), 2000, 4 * 3600, seed=11)
    t0 = time.perf_counter()
    rep = run(trips, SimConfig(fleet_size=20), M, Z)
    return rep, time.perf_counter() - t0


def test_feasibility_invariants(criterion, feasibility_run):
    rep, elapsed = feasibility_run
    completed = sum(r["status"] == "completed" for r in rep.requests)
    over_ride = sum(r["ride"] > max(int(1.5 * r["shortest_time"]), 240 + r["shortest_time"]) for r in rep.requests
                    if r["ride"] is not None)
    ok = len(rep.requests) == 2000 and completed == 2000 and not rep.violations and over_ride == 0 and elapsed < 300
    criterion(2, "feasibility invariants", ok,
              f"{completed}/{len(rep.requests)} completed, {len(rep.violations)} violations, "
              f"{over_ride} ride-limit breaches, {elapsed:.1f}s")
    assert ok


def test_forecast_relocation_reduces_wait(criterion):
    t0 = time.perf_counter()
    rows = [run_modes(seed) for seed in range(20)]
    elapsed = time.perf_counter() - t0
    mean = {m: float(np.mean([r[m]["mean"] for r in rows])) for m in rows[0]}
    red_f = 100 * (mean["myopic"] - mean["forecast"]) / mean["myopic"]
    red_o = 100 * (mean["myopic"] - mean["oracle"]) / mean["myopic"]
    violations = sum(r[m]["violations"] for r in rows for m in r)
    ok = red_f >= 10 and red_o >= red_f - 2 and violations == 0 and elapsed < 900
    criterion(3, "forecast relocation beats myopic", ok,
              f"myopic {mean['myopic']:.1f}s, forecast -{red_f:.1f}%, oracle -{red_o:.1f}%, {elapsed:.0f}s")
    assert ok


def _var1(seed, zone_map, n=5000, sigma=0.1):
    rng = np.random.default_rng(seed)
    A = np.zeros((4, 4))
    for z in range(4):
        A[z, z] = 0.4
        A[z, list(zone_map.neighbors(z))] = 0.2
    x = np.zeros((4, n))
    for t in range(1, n):
        x[:, t] = A @ x[:, t - 1] + rng.normal(0, sigma, 4)
    return A, x


def test_var_recovery(criterion):
    _, _, zm = build_grid(2, 2, 60, 2, 2)
    good = 0
    for seed in range(20):
        A, x = _var1(seed, zm)
        models = fit_var_system(DifferencedSeries(x, 0), zm, k_max=8)
        good += all(m.k == 1 and np.abs(m.coef[0] - A[z, list(m.order)]).max() <= 0.05
                    for z, m in models.items())
    ok = good >= 18
    criterion(4, "VAR(1) recovery", ok, f"{good}/20 seeds with k=1 and coefficients within 0.05")
    assert ok


def _vr_brute(moves, idle, M, zm):
    total = 0
    for i, vehicles in idle.items():
        targets = [j for j in range(zm.n_zones) if j != i and moves[i, j] > 0]
        costs = [[min(M(loc, m) for m in zm.members[j]) for j in targets] for _, loc in vehicles]
        total += brute_vr(costs, [int(moves[i, j]) for j in targets]) if targets else 0
    return total


def test_mpc_and_vr_exact(criterion):
    mpc_bad = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        Z, T = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        D = rng.integers(0, 3, (Z, Z, T))
        A = np.zeros((Z, T), dtype=int)
        for _ in range(int(rng.integers(0, 4))):
            A[rng.integers(Z), rng.integers(T)] += 1
        tt = rng.integers(1, 3, (Z, Z))
        np.fill_diagonal(tt, 0)
        sol = solve_mpc(MpcInput(D.astype(float), np.ones((Z, Z)), A, tt))
        mpc_bad += sol.objective != brute_mpc(D.tolist(), A.tolist(), tt.tolist(), T)

    _, M, zm = build_grid(4, 4, 60, 2, 2)
    vr_bad = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        locs = rng.choice(16, size=int(rng.integers(1, 7)), replace=False)
        idle = {}
        for vid, loc in enumerate(locs):
            idle.setdefault(zm.zone_of[loc], []).append((vid, int(loc)))
        moves = np.zeros((4, 4), dtype=int)
        for i, vs in idle.items():
            others = [j for j in range(4) if j != i]
            for j in rng.choice(others, size=int(rng.integers(0, len(vs) + 1))):
                moves[i, j] += 1
        plan = solve_vr(moves, idle, M, zm)
        moved = {}
        for a in plan.assignments:
            moved[a.zone] = moved.get(a.zone, 0) + 1
        vr_bad += plan.objective != _vr_brute(moves, idle, M, zm) or plan.dropped != 0 or \
            sum(moved.values()) != moves.sum()
    ok = mpc_bad == 0 and vr_bad == 0
    criterion(5, "MPC/VR exactness", ok, f"MPC {mpc_bad}/100 mismatches, VR {vr_bad}/100 mismatches")
    assert ok


def test_penalty_law(criterion):
    worst = 0.0
    for e_c, tau in itertools.product((0, 30, 290, 3600), range(0, 200)):
        p0, p1 = penalty(e_c, tau, 30), penalty(e_c, tau + 1, 30)
        worst = max(worst, abs(p1 / p0 - 2 ** 0.1) / 2 ** 0.1)
    fresh = penalty(600, 20, 30)
    ok = worst < 1e-12 and fresh == 420.0
    criterion(6, "penalty doubling law", ok, f"max relative ratio error {worst:.2e}, fresh penalty {fresh}")
    assert ok


def test_determinism(criterion, tmp_path):
    matrix, zone_map, history, sim, H = hot_zone_scenario(3, sim_seconds=1800)
    texts = []
    for _ in range(2):
        cfg = SimConfig(fleet_size=10, mode="forecast", seed=3)
        texts.append(run(sim, cfg, matrix, zone_map, history=history, history_seconds=H).to_json().encode())
    ok = texts[0] == texts[1]
    criterion(7, "deterministic reports", ok, f"{len(texts[0])} bytes, identical={ok}")
    assert ok


def test_lp_mip_ordering(criterion, feasibility_run):
    rep, _ = feasibility_run
    dispatched = [e for e in rep.epochs if "objective" in e]
    above = [e["epoch"] for e in dispatched if e["lp_objective"] > e["objective"] + 1e-6 * max(1, e["objective"])]
    rising = [e["epoch"] for e in dispatched
              if any(b > a + 1e-6 * max(1, abs(a)) for a, b in zip(e["lp_history"], e["lp_history"][1:]))]
    ok = bool(dispatched) and not above and not rising
    criterion(8, "LP/MIP ordering", ok,
              f"{len(dispatched)} epochs, {len(above)} with LP > MIP, {len(rising)} with rising LP history")
    assert ok
