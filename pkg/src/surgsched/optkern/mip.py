"""0-1 branch-and-bound MIP solver with a lazy-constraint callback hook.

Search is best-bound first with FIFO tie-break; branching picks the most
fractional binary. Every integer-feasible node candidate is re-verified in
exact rational arithmetic (model rows are built from ints/Fractions) and
then offered to the callback, which either accepts it or returns violated
constraints that are appended globally; the node is re-solved after cuts.

The reported bound is conservatively clamped so it never crosses the
incumbent.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .lp import (
    GE,
    INFEASIBLE,
    LE,
    MIN,
    OPTIMAL,
    UNBOUNDED,
    KernelError,
    LinearProgram,
    SimplexEngine,
)

INT_TOL = 1e-6
PRUNE_EPS = 1e-7

TIME_LIMIT = "TIME_LIMIT"
NODE_LIMIT = "NODE_LIMIT"

#: Sentinel a callback may return to accept a candidate (None works too).
ACCEPT = None

# A lazy cut is (coeffs: {var_id: coeff}, sense, rhs).
CutSpec = tuple[Mapping[object, object], str, object]


@dataclass
class MipProblem:
    lp: LinearProgram
    binaries: set = field(default_factory=set)
    callback: Callable[[dict], list[CutSpec] | None] | None = None
    # Optional branching priorities (higher class branches first; the most
    # fractional variable is chosen within the highest fractional class).
    branch_priority: Mapping[object, int] | None = None


@dataclass
class MipResult:
    status: str
    incumbent: dict | None
    objective: float
    bound: float
    stats: dict


def _exact(v):
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    if isinstance(v, float) and v.is_integer():
        return Fraction(int(v))
    return None


class _Verifier:
    """Exact feasibility and cut-violation checks on integer candidates."""

    def __init__(self, lp: LinearProgram):
        self.lp = lp

    def row_ok(self, coeffs, sense, rhs, values) -> bool:
        lhs = Fraction(0)
        exact = True
        for vid, coeff in coeffs.items():
            ce = _exact(coeff)
            v = values.get(vid, 0)
            if ce is None or not isinstance(v, int):
                exact = False
                break
            lhs += ce * v
        if not exact:
            lhs = sum(float(coeff) * float(values.get(vid, 0)) for vid, coeff in coeffs.items())
            rhsf = float(rhs)
            tol = 1e-6 * (1.0 + abs(rhsf))
            if sense == LE:
                return lhs <= rhsf + tol
            if sense == GE:
                return lhs >= rhsf - tol
            return abs(lhs - rhsf) <= tol
        rhs_e = _exact(rhs)
        if rhs_e is None:
            rhs_e = Fraction(rhs)
        if sense == LE:
            return lhs <= rhs_e
        if sense == GE:
            return lhs >= rhs_e
        return lhs == rhs_e

    def feasible(self, values, cuts) -> bool:
        for coeffs, sense, rhs in zip(self.lp.rows, self.lp.senses, self.lp.rhs):
            if not self.row_ok(coeffs, sense, rhs, values):
                return False
        for coeffs, sense, rhs in cuts:
            if not self.row_ok(coeffs, sense, rhs, values):
                return False
        return True


def solve_mip(
    mip: MipProblem,
    time_limit: float | None = None,
    gap_tol: float = 1e-9,
    node_limit: int | None = None,
    warm_candidates: Iterable[Mapping] = (),
    dive_every: int = 200,
) -> MipResult:
    t0 = time.perf_counter()
    lp = mip.lp
    sense_min = lp.sense == MIN
    sign = 1.0 if sense_min else -1.0  # minimize sign*obj internally

    c, A, senses, b, l0, u0 = lp.dense()
    offset = float(lp.objective_offset)
    n = lp.n_vars
    bin_idx = sorted(lp.var_index(v) for v in mip.binaries)
    bin_set = set(bin_idx)
    prio = None
    if mip.branch_priority is not None:
        prio = {j: mip.branch_priority.get(lp.var_ids[j], 0) for j in bin_idx}
    for j in bin_idx:
        l0[j] = max(l0[j], 0.0)
        u0[j] = min(u0[j], 1.0)
    verifier = _Verifier(lp)

    cuts: list[CutSpec] = []
    engine = SimplexEngine(sign * c, A, senses, b)

    stats = {
        "n_nodes": 0,
        "n_callbacks": 0,
        "n_lazy_cuts": 0,
        "root_lp_bound": math.nan,
        "time_total": 0.0,
        "time_callback": 0.0,
    }

    incumbent: dict | None = None
    incumbent_val = math.inf  # in minimize-sign space, without offset

    def out_of_time():
        return time_limit is not None and time.perf_counter() - t0 > time_limit

    def add_cuts(new_cuts, values):
        for coeffs, csense, rhs in new_cuts:
            if verifier.row_ok(coeffs, csense, rhs, values):
                raise KernelError("callback returned a constraint not violated by the candidate")
            cuts.append((dict(coeffs), csense, rhs))
            row = np.zeros(n)
            for vid, coeff in coeffs.items():
                row[lp.var_index(vid)] = float(coeff)
            engine.add_row(row, csense, float(rhs))
        stats["n_lazy_cuts"] += len(new_cuts)

    def dispatch_callback(values) -> bool:
        """True if accepted, False if cuts were added."""
        if mip.callback is None:
            return True
        stats["n_callbacks"] += 1
        tc = time.perf_counter()
        returned = mip.callback(dict(values))
        stats["time_callback"] += time.perf_counter() - tc
        if not returned:
            return True
        add_cuts(returned, values)
        return False

    def solve_node_lp(l, u, warm=None):
        return engine.solve(l, u, warm=warm)

    def candidate_from(x):
        values = {}
        for j, vid in enumerate(lp.var_ids):
            values[vid] = int(round(x[j])) if j in bin_set else float(x[j])
        return values

    def candidate_obj(values) -> float:
        return float(sum(float(c[j]) * float(values[vid]) for j, vid in enumerate(lp.var_ids)))

    def try_incumbent(values) -> None:
        nonlocal incumbent, incumbent_val
        val = sign * candidate_obj(values)
        if val < incumbent_val - 1e-12:
            incumbent_val = val
            incumbent = values

    def dive(l, u, warm):
        """LP-guided dive: repeatedly fix the most fractional binary to its
        nearest value. Integral end points go through the same verify +
        callback path as node candidates and may seed the incumbent."""
        l, u = l.copy(), u.copy()
        for _depth in range(len(bin_idx) + 1):
            res = solve_node_lp(l, u, warm=warm)
            if res.status != OPTIMAL:
                return
            if res.basis is not None:
                warm = (res.basis, res.flags)
            if incumbent is not None and res.objective >= incumbent_val - PRUNE_EPS:
                return
            x = res.x
            fracs = [j for j in bin_idx if INT_TOL < x[j] < 1.0 - INT_TOL]
            if not fracs:
                values = candidate_from(x)
                if verifier.feasible(values, cuts) and dispatch_callback(values):
                    try_incumbent(values)
                return
            if prio is not None:
                top = max(prio[j] for j in fracs)
                fracs = [j for j in fracs if prio[j] == top]
            j = min(fracs, key=lambda jj: (abs(x[jj] - 0.5), jj))
            fix = 1.0 if x[j] >= 0.5 else 0.0
            l[j] = u[j] = fix

    # Warm candidates go through the same exact-check + callback path as
    # node candidates, seeding the incumbent (and possibly the cut pool).
    for cand in warm_candidates:
        values = {vid: cand.get(vid, 0) for vid in lp.var_ids}
        ok_bounds = all(
            l0[j] - 1e-9 <= float(values[vid]) <= u0[j] + 1e-9
            for j, vid in enumerate(lp.var_ids)
        )
        if not ok_bounds or not verifier.feasible(values, cuts):
            continue
        if dispatch_callback(values):
            try_incumbent(values)

    # Node = (bound in sign space, seq, lower bounds, upper bounds, warm state).
    seq = 0
    heap: list = []
    heapq.heappush(heap, (-math.inf, seq, l0, u0, None))
    root_recorded = False
    status = OPTIMAL
    found_unbounded = False

    while heap:
        if out_of_time():
            status = TIME_LIMIT
            break
        if node_limit is not None and stats["n_nodes"] >= node_limit:
            status = NODE_LIMIT
            break
        node_bound, _sq, l, u, warm = heapq.heappop(heap)
        margin = max(gap_tol, PRUNE_EPS)
        if incumbent is not None and node_bound >= incumbent_val - margin:
            # Best-bound order: every remaining node is pruned too.
            heap.clear()
            break
        stats["n_nodes"] += 1

        # Callback-cut loop on this node.
        outcome = "branch"
        x = None
        while True:
            res = solve_node_lp(l, u, warm=warm)
            st, x, obj = res.status, res.x, res.objective
            if res.basis is not None:
                warm = (res.basis, res.flags)
            if not root_recorded:
                root_recorded = True
                if st == OPTIMAL:
                    stats["root_lp_bound"] = sign * obj + offset
            if st == INFEASIBLE:
                outcome = "closed"
                break
            if st == UNBOUNDED:
                found_unbounded = True
                outcome = "closed"
                break
            node_bound = obj
            if incumbent is not None and node_bound >= incumbent_val - PRUNE_EPS:
                outcome = "closed"
                break
            if any(INT_TOL < x[j] < 1.0 - INT_TOL for j in bin_idx):
                outcome = "branch"
                break
            values = candidate_from(x)
            if not verifier.feasible(values, cuts):
                raise KernelError("integral LP optimum failed exact feasibility check")
            if dispatch_callback(values):
                try_incumbent(values)
                outcome = "closed"
                break
            if out_of_time():
                outcome = "requeue"
                break

        if found_unbounded:
            stats["time_total"] = time.perf_counter() - t0
            return MipResult(UNBOUNDED, None, math.nan, math.nan, stats)
        if outcome == "closed":
            continue
        if outcome == "requeue":
            seq += 1
            heapq.heappush(heap, (node_bound, seq, l, u, warm))
            continue
        if stats["n_nodes"] == 1 or stats["n_nodes"] % dive_every == 0:
            dive(l, u, warm)
            if incumbent is not None and node_bound >= incumbent_val - PRUNE_EPS:
                continue
        if incumbent is not None and res.reduced is not None and res.flags is not None:
            # Reduced-cost fixing: a nonbasic binary whose reduced cost
            # alone pushes the bound past the incumbent can be pinned at
            # its bound for this whole subtree.
            slack_to_inc = incumbent_val - PRUNE_EPS - node_bound
            d = res.reduced
            fl = res.flags
            fix_low = [
                j for j in bin_idx if l[j] != u[j] and fl[j] == 0 and d[j] >= slack_to_inc
            ]
            fix_up = [
                j for j in bin_idx if l[j] != u[j] and fl[j] == 1 and -d[j] >= slack_to_inc
            ]
            if fix_low or fix_up:
                l, u = l.copy(), u.copy()
                for j in fix_low:
                    u[j] = l[j]
                for j in fix_up:
                    l[j] = u[j]
        fracs = [j for j in bin_idx if INT_TOL < x[j] < 1.0 - INT_TOL]
        if prio is not None:
            top = max(prio[j] for j in fracs)
            fracs = [j for j in fracs if prio[j] == top]
        j = min(fracs, key=lambda jj: (abs(x[jj] - 0.5), jj))
        for fix in (1.0, 0.0):
            lc, uc = l.copy(), u.copy()
            lc[j] = uc[j] = fix
            seq += 1
            heapq.heappush(heap, (node_bound, seq, lc, uc, warm))

    if incumbent is None:
        stats["time_total"] = time.perf_counter() - t0
        if status == OPTIMAL:
            return MipResult(INFEASIBLE, None, math.nan, math.nan, stats)
        bound_s = min((nb for nb, *_r in heap), default=-math.inf)
        return MipResult(status, None, math.nan, sign * bound_s + offset, stats)

    if status == OPTIMAL:
        bound_s = incumbent_val
    else:
        bound_s = min((nb for nb, *_r in heap), default=incumbent_val)
        bound_s = min(bound_s, incumbent_val)

    obj_out = sign * incumbent_val + offset
    bound_out = sign * bound_s + offset
    if status != OPTIMAL and abs(obj_out - bound_out) <= gap_tol:
        status = OPTIMAL
        bound_out = obj_out
    stats["time_total"] = time.perf_counter() - t0
    return MipResult(status, incumbent, obj_out, bound_out, stats)
