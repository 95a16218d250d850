"""Thin LP wrapper over HiGHS plus a small best-first branch-and-bound."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

INT_TOL = 1e-6


class SolverError(RuntimeError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray  # one per equality row


def solve_lp(c, A_eq, b_eq, lower=None, upper=None) -> LPResult | None:
    """min c.x s.t. A_eq x = b_eq, lower <= x <= upper. ``None`` when infeasible.

    Dual simplex is used so solutions are basic (vertex) solutions; the
    integrality arguments in the callers rely on that.
    """
    n = len(c)
    lower = np.zeros(n) if lower is None else lower
    upper = np.full(n, np.inf) if upper is None else upper
    bounds = [(lo, None if np.isinf(hi) else hi) for lo, hi in zip(lower, upper)]
    res = linprog(
        c,
        A_eq=csr_matrix(A_eq) if not hasattr(A_eq, "tocsr") else A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs-ds",
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise SolverError(f"LP solve failed: {res.message}")
    return LPResult(x=res.x, objective=float(res.fun), duals=np.asarray(res.eqlin.marginals))


@dataclass
class MIPResult:
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    optimal: bool


def branch_and_bound(c, A_eq, b_eq, integer, incumbent=None, node_budget=10_000,
                     lower=None, upper=None) -> MIPResult:
    """Best-first branch-and-bound over LP relaxations.

    ``integer`` is a boolean mask of variables required to be integral.
    ``incumbent`` is an optional known feasible solution; with a zero node
    budget it is returned untouched. Branching picks the most fractional
    variable, lowest index on ties, so runs are reproducible.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    integer = np.asarray(integer, dtype=bool)
    best_x = None if incumbent is None else np.asarray(incumbent, dtype=float)
    best_obj = np.inf if incumbent is None else float(c @ best_x)

    heap = [(-np.inf, 0, lower, upper)]
    counter = 1
    nodes = 0
    while heap:
        if nodes >= node_budget:
            bound = min(item[0] for item in heap)
            return MIPResult(best_x, best_obj, min(bound, best_obj), nodes, False)
        parent_bound, _, lo, hi = heapq.heappop(heap)
        if parent_bound >= best_obj - 1e-9:
            continue
        nodes += 1
        lp = solve_lp(c, A_eq, b_eq, lo, hi)
        if lp is None or lp.objective >= best_obj - 1e-9:
            continue
        x = lp.x
        frac = np.abs(x - np.round(x))
        frac[~integer] = 0.0
        if frac.max() <= INT_TOL:
            xr = x.copy()
            xr[integer] = np.round(xr[integer])
            best_x, best_obj = xr, float(c @ xr)
            continue
        k = int(np.argmax(frac))
        down_hi = hi.copy()
        down_hi[k] = np.floor(x[k])
        up_lo = lo.copy()
        up_lo[k] = np.ceil(x[k])
        heapq.heappush(heap, (lp.objective, counter, lo, down_hi))
        heapq.heappush(heap, (lp.objective, counter + 1, up_lo, hi))
        counter += 2
    return MIPResult(best_x, best_obj, best_obj, nodes, True)
