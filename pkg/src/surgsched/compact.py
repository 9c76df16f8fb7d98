"""Baseline solver: the leader MIP with bilevel-feasibility callbacks.

The single-level leader model (with block-count indicators always present
so cuts can be stated) is handed to the branch-and-bound kernel. Whenever
the kernel finds an integer candidate, the callback solves each surgeon's
follower problem; surgeons whose proposed value falls short of their
optimum get a lazy cut, which removes the candidate and every profile
twin of it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import models
from .cuts import BlockCountProfile, CutKind, LazyCut, LazyCutStore, build_cut_row
from .domain import Assignment, Instance, check_single_level_feasibility, leader_objective
from .follower import FollowerMode, FollowerOracle, check_bilevel_feasibility, follower_big_m
from .optkern import MIN, OPTIMAL, LinearProgram, MipProblem, solve_mip

FIRST_VIOLATED = "first_violated"
ALL_VIOLATED = "all_violated"


@dataclass
class CompactOptions:
    cut_kind: CutKind = CutKind.ASSIGNMENT
    cut_scope: str = ALL_VIOLATED
    time_limit: float = 1200.0
    gap_tol: float = 1e-9
    node_limit: int | None = None


@dataclass
class SolveStats:
    """Run metrics shared by both solvers; pricing fields stay zero for the
    compact path."""

    F: Fraction | None = None
    F_lpr_root: float | None = None
    gap_root_pct: float | None = None
    optimal: bool = False
    feasible_found: bool = False
    n_callbacks: int = 0
    n_lazy_cuts: int = 0
    n_nodes: int = 0
    time_total: float = 0.0
    time_callback: float = 0.0
    n_cgi: int = 0
    n_cols: int = 0
    time_subproblem: float = 0.0
    time_master: float = 0.0
    status: str = ""
    bound: float | None = None

    def finalize_gap(self):
        if self.F is not None and self.F_lpr_root is not None and self.F_lpr_root > 0:
            self.gap_root_pct = 100.0 * (float(self.F) - self.F_lpr_root) / self.F_lpr_root


def build_leader_model(instance: Instance) -> LinearProgram:
    lp = LinearProgram(sense=MIN)
    models.add_schedule_vars(lp, instance)
    models.add_count_indicators(lp, instance)
    models.add_schedule_rows(lp, instance)
    coeffs, offset = models.leader_objective_terms(instance)
    lp.set_objective(coeffs, offset=offset)
    return lp


def solve_compact(
    instance: Instance, options: CompactOptions | None = None
) -> tuple[Assignment | None, SolveStats]:
    options = options or CompactOptions()
    t0 = time.perf_counter()
    lp = build_leader_model(instance)
    oracle = FollowerOracle(instance)
    store = LazyCutStore()
    mode = (
        FollowerMode.PURE
        if options.cut_kind is CutKind.OBJECTIVE
        else FollowerMode.OPTIMISTIC_COMPACT
    )

    def callback(values):
        cuts = []
        for s in instance.surgeons:
            held = [b.id for b in instance.blocks if values.get(("y", s, b.id), 0) == 1]
            scheduled = {
                p.id
                for p in instance.patients_of(s)
                for b in instance.blocks
                if values.get(("x", p.id, b.id), 0) == 1
            }
            f_s = sum(p.prio_follower for p in instance.patients_of(s) if p.id in scheduled)
            best = oracle.solve(s, held, mode)
            if best.f_prime <= f_s:
                continue
            profile = BlockCountProfile.of(instance, held)
            if options.cut_kind is CutKind.OBJECTIVE:
                cut = LazyCut(CutKind.OBJECTIVE, s, profile, f_c=best.f_prime)
            else:
                cut = LazyCut(
                    CutKind.ASSIGNMENT, s, profile, pa_set=frozenset(best.x_prime.keys())
                )
            store.record(cut)
            cuts.append(build_cut_row(instance, cut, follower_big_m(instance, s)))
            if options.cut_scope == FIRST_VIOLATED:
                break
        return cuts or None

    result = solve_mip(
        MipProblem(lp, binaries=models.binary_ids(lp), callback=callback),
        time_limit=options.time_limit,
        gap_tol=options.gap_tol,
        node_limit=options.node_limit,
    )

    stats = SolveStats(
        F_lpr_root=result.stats["root_lp_bound"],
        optimal=result.status == OPTIMAL,
        feasible_found=result.incumbent is not None,
        n_callbacks=result.stats["n_callbacks"],
        n_lazy_cuts=result.stats["n_lazy_cuts"],
        n_nodes=result.stats["n_nodes"],
        time_callback=result.stats["time_callback"],
        status=result.status,
        bound=result.bound if not math.isnan(result.bound) else None,
    )
    assignment = None
    if result.incumbent is not None:
        assignment = models.assignment_from_values(instance, result.incumbent)
        stats.F = leader_objective(instance, assignment)
        report = check_single_level_feasibility(instance, assignment)
        if not report.ok:
            raise RuntimeError(f"incumbent violates single-level constraints: {report.violations}")
        rows = check_bilevel_feasibility(instance, assignment, oracle)
        if not all(ok for (*_x, ok) in rows):
            raise RuntimeError(f"incumbent is not bilevel feasible: {rows}")
    stats.finalize_gap()
    stats.time_total = time.perf_counter() - t0
    return assignment, stats
