"""Branch-and-price solver on the per-surgeon schedule decomposition.

The restricted master selects one schedule pattern per surgeon subject to
the room-overlap rows; patterns are priced per surgeon by a small MIP
whose feasibility callback keeps every generated column bilevel feasible
(lazy constraints, optionally remembered across pricing runs). Branching
is on the aggregated block incidences y and the search is best-bound with
the one-branch explored first; a master heuristic solves the restricted
master to integrality at every converged node.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .compact import SolveStats
from .cuts import (
    BlockCountProfile,
    CutKind,
    LazyCut,
    LazyCutStore,
    build_cut_row,
    build_q_link,
    q_variables,
)
from .domain import Assignment, Instance, check_single_level_feasibility, leader_objective
from .follower import FollowerMode, FollowerOracle, check_bilevel_feasibility, follower_big_m
from .inith import initial_heuristic
from .optkern import (
    EQ,
    LE,
    MAX,
    MIN,
    OPTIMAL,
    KernelError,
    LinearProgram,
    MipProblem,
    solve_lp,
    solve_mip,
)

RC_EPS = Fraction(1, 10**6)
FRAC_TOL = 1e-6


@dataclass(frozen=True)
class Pattern:
    """One surgeon's schedule column: block incidences plus the follower-
    optimal patient detail realizing (delta, rho)."""

    surgeon: str
    blocks: frozenset[int]
    delta: int
    rho: int
    x_detail: tuple[tuple[str, int], ...]

    def cost(self, instance: Instance) -> Fraction:
        return instance.beta * self.rho - instance.alpha * self.delta

    def admissible(self, branch_history) -> bool:
        for (s, b, e) in branch_history:
            if s != self.surgeon:
                continue
            if e == 1 and b not in self.blocks:
                return False
            if e == 0 and b in self.blocks:
                return False
        return True


BranchHistory = tuple[tuple[str, int, int], ...]


@dataclass
class BnpOptions:
    cut_kind: CutKind = CutKind.ASSIGNMENT
    multi_pattern: bool = True
    use_lcr: bool = True
    use_initial_heuristic: bool = True
    time_limit: float = 1200.0
    node_limit: int | None = None
    trace_file: str | None = None


class NodeInfeasible(Exception):
    """Branching fixings admit no schedule for some surgeon."""


def make_pattern(instance: Instance, oracle: FollowerOracle, surgeon: str, block_ids) -> Pattern:
    """Column with the canonical leader-best optimal response (which is in
    particular follower-optimal, as every pooled column must be)."""
    res = oracle.solve(surgeon, block_ids, FollowerMode.OPTIMISTIC_SUBPROBLEM)
    return Pattern(
        surgeon=surgeon,
        blocks=frozenset(block_ids),
        delta=res.delta,
        rho=res.rho,
        x_detail=tuple(sorted(res.x_prime.items())),
    )


def default_pattern(
    instance: Instance,
    surgeon: str,
    branch_history: BranchHistory,
    oracle: FollowerOracle | None = None,
) -> Pattern:
    """Pattern holding exactly the blocks fixed to one for this surgeon.

    Raises NodeInfeasible when those fixings violate the per-day/horizon/
    availability rules, in which case the node must be pruned.
    """
    oracle = oracle or FollowerOracle(instance)
    forced = sorted({b for (s, b, e) in branch_history if s == surgeon and e == 1})
    if len(forced) > instance.v_horizon:
        raise NodeInfeasible(f"{surgeon}: {len(forced)} forced blocks exceed the horizon limit")
    per_day: dict[int, int] = {}
    for b in forced:
        d = instance.block(b).day
        per_day[d] = per_day.get(d, 0) + 1
        if per_day[d] > instance.v_day:
            raise NodeInfeasible(f"{surgeon}: forced blocks exceed the per-day limit on day {d}")
        if not instance.available(surgeon, b):
            raise NodeInfeasible(f"{surgeon}: forced block {b} is unavailable")
    return make_pattern(instance, oracle, surgeon, forced)


# -- restricted master -------------------------------------------------------


@dataclass
class RmpSolution:
    status: str
    objective: float
    theta: dict  # column index -> value
    lam: dict  # (day, t) -> dual (<= 0)
    mu: dict  # surgeon -> dual
    y: dict  # (surgeon, block id) -> aggregated value


def solve_rmp(
    columns: list[Pattern],
    instance: Instance,
    branch_history: BranchHistory = (),
    admissible: list[int] | None = None,
) -> RmpSolution:
    """Solve the restricted master LP over branch-admissible columns."""
    if admissible is None:
        admissible = [k for k, col in enumerate(columns) if col.admissible(branch_history)]
    lp = LinearProgram(sense=MIN)
    for k in admissible:
        lp.add_var(("th", k), 0, 1, obj=columns[k].cost(instance))
    lp.objective_offset = instance.alpha * instance.capacity
    grid = instance.grid_points()
    for (d, t) in grid:
        blocks_here = instance.overlap_sets[(d, t)]
        coeffs = {}
        for k in admissible:
            hits = len(columns[k].blocks & blocks_here)
            if hits:
                coeffs[("th", k)] = hits
        lp.add_constr(coeffs, LE, instance.rooms, name=("rooms", d, t))
    for s in instance.surgeons:
        lp.add_constr(
            {("th", k): 1 for k in admissible if columns[k].surgeon == s}, EQ, 1,
            name=("one", s),
        )
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise KernelError(
            f"restricted master ended {sol.status}; the default-pattern guarantee is broken"
        )
    lam = {grid[i]: min(sol.duals[i], 0.0) for i in range(len(grid))}
    mu = {s: sol.duals[len(grid) + j] for j, s in enumerate(instance.surgeons)}
    theta = {k: sol.value(("th", k)) for k in admissible}
    y: dict[tuple[str, int], float] = {}
    for k in admissible:
        v = theta[k]
        if v <= FRAC_TOL:
            continue
        for b in columns[k].blocks:
            key = (columns[k].surgeon, b)
            y[key] = y.get(key, 0.0) + v
    return RmpSolution(sol.status, sol.objective, theta, lam, mu, y)


# -- pricing -----------------------------------------------------------------


def _block_dual_weight(instance: Instance, block, lam) -> float:
    return sum(
        lam[(block.day, t)]
        for (d, t) in instance.grid_points()
        if d == block.day and block.start <= t < block.end
    )


def price_surgeon(
    instance: Instance,
    surgeon: str,
    lam: dict,
    mu_s: float,
    branch_history: BranchHistory = (),
    lcr_store: LazyCutStore | None = None,
    cut_kind: CutKind = CutKind.ASSIGNMENT,
    oracle: FollowerOracle | None = None,
    warm_patterns: list[Pattern] = (),
    use_lcr: bool = True,
    time_limit: float | None = None,
    stats: SolveStats | None = None,
) -> Pattern | None:
    """Max-reduced-cost bilevel-feasible schedule for one surgeon, or None
    when no column beats the threshold (or the time budget ran out)."""
    oracle = oracle or FollowerOracle(instance)
    patients = instance.patients_of(surgeon)
    total_lp_prio = sum(p.prio_leader for p in patients)

    lp = LinearProgram(sense=MAX)
    fixed_one = {b for (s, b, e) in branch_history if s == surgeon and e == 1}
    fixed_zero = {b for (s, b, e) in branch_history if s == surgeon and e == 0}
    for b in instance.blocks:
        ub = 1 if instance.available(surgeon, b.id) and b.id not in fixed_zero else 0
        lb = 1 if b.id in fixed_one else 0
        lp.add_var(("y", surgeon, b.id), lb, ub, obj=_block_dual_weight(instance, b, lam))
    for p in patients:
        gain = instance.alpha * p.duration + instance.beta * p.prio_leader
        for b in instance.blocks:
            lp.add_var(("x", p.id, b.id), 0, 1, obj=gain)
    for vid in q_variables(instance, surgeon):
        lp.add_var(vid, 0, 1)
    lp.objective_offset = mu_s - float(instance.beta * total_lp_prio)

    # With one block per day, day-use and day-length indicators are exact
    # aggregates of y; branching on them first decides the capacity profile
    # before individual block timings, which keeps the search tree shallow.
    aggregate_days = instance.v_day == 1
    if aggregate_days:
        for d in range(instance.days):
            lp.add_var(("u", surgeon, d), 0, 1)
            for l in instance.block_lengths():
                lp.add_var(("z", surgeon, d, l), 0, 1)

    for d in range(instance.days):
        lp.add_constr(
            {("y", surgeon, b.id): 1 for b in instance.blocks_on_day(d)}, LE, instance.v_day
        )
    lp.add_constr({("y", surgeon, b.id): 1 for b in instance.blocks}, LE, instance.v_horizon)
    for p in patients:
        lp.add_constr({("x", p.id, b.id): 1 for b in instance.blocks}, LE, 1)
    for b in instance.blocks:
        coeffs = {("x", p.id, b.id): p.duration for p in patients}
        coeffs[("y", surgeon, b.id)] = -b.length
        lp.add_constr(coeffs, LE, 0)
    for coeffs, sense, rhs in build_q_link(instance, surgeon):
        lp.add_constr(coeffs, sense, rhs)
    if aggregate_days:
        for d in range(instance.days):
            coeffs = {("y", surgeon, b.id): 1 for b in instance.blocks_on_day(d)}
            coeffs[("u", surgeon, d)] = -1
            lp.add_constr(coeffs, EQ, 0)
            for l in instance.block_lengths():
                coeffs = {
                    ("y", surgeon, b.id): 1
                    for b in instance.blocks_on_day(d)
                    if b.length == l
                }
                coeffs[("z", surgeon, d, l)] = -1
                lp.add_constr(coeffs, EQ, 0)
    big_m = follower_big_m(instance, surgeon)
    if use_lcr and lcr_store is not None:
        for cut in lcr_store.retrieve(surgeon):
            coeffs, sense, rhs = build_cut_row(instance, cut, big_m)
            lp.add_constr(coeffs, sense, rhs)

    mode = (
        FollowerMode.PURE if cut_kind is CutKind.OBJECTIVE else FollowerMode.OPTIMISTIC_SUBPROBLEM
    )

    def callback(values):
        held = [b.id for b in instance.blocks if values.get(("y", surgeon, b.id), 0) == 1]
        scheduled = {
            p.id for p in patients for b in instance.blocks if values.get(("x", p.id, b.id), 0) == 1
        }
        f_s = sum(p.prio_follower for p in patients if p.id in scheduled)
        best = oracle.solve(surgeon, held, mode)
        if best.f_prime <= f_s:
            return None
        profile = BlockCountProfile.of(instance, held)
        if cut_kind is CutKind.OBJECTIVE:
            cut = LazyCut(CutKind.OBJECTIVE, surgeon, profile, f_c=best.f_prime)
        else:
            cut = LazyCut(
                CutKind.ASSIGNMENT, surgeon, profile, pa_set=frozenset(best.x_prime.keys())
            )
        if use_lcr and lcr_store is not None:
            lcr_store.record(cut)
        return [build_cut_row(instance, cut, big_m)]

    warm = []
    for pat in warm_patterns:
        values = {vid: 0 for vid in lp.var_ids}
        for b in pat.blocks:
            values[("y", surgeon, b)] = 1
        for pid, b in pat.x_detail:
            values[("x", pid, b)] = 1
        profile = BlockCountProfile.of(instance, pat.blocks)
        for l, nl in profile.counts:
            values[("q", surgeon, l, nl)] = 1
        if aggregate_days:
            for b in pat.blocks:
                blk = instance.block(b)
                values[("u", surgeon, blk.day)] = 1
                values[("z", surgeon, blk.day, blk.length)] = 1
        warm.append(values)

    # Branch structure before detail: capacity profile (day use, then
    # day-length), then block incidences, then patients; the count
    # indicators follow from y.
    _prio_rank = {"u": 4, "z": 3, "y": 2, "x": 1, "q": 0}
    priority = {vid: _prio_rank[vid[0]] for vid in lp.var_ids}
    res = solve_mip(
        MipProblem(lp, binaries=set(lp.var_ids), callback=callback, branch_priority=priority),
        time_limit=time_limit,
        warm_candidates=warm,
    )
    if stats is not None:
        stats.n_callbacks += res.stats["n_callbacks"]
        stats.n_lazy_cuts += res.stats["n_lazy_cuts"]
        stats.time_callback += res.stats["time_callback"]
    if res.status != OPTIMAL or res.incumbent is None:
        return None
    if res.objective <= float(RC_EPS):
        return None
    held = [b.id for b in instance.blocks if res.incumbent.get(("y", surgeon, b.id), 0) == 1]
    pattern = make_pattern(instance, oracle, surgeon, held)
    # Exact re-check of the reduced cost before the column may enter the
    # pool; duals convert exactly, the column data is already rational.
    rc = Fraction(0)
    for b in pattern.blocks:
        rc += Fraction(_block_dual_weight(instance, instance.block(b), lam))
    rc += Fraction(mu_s)
    rc += instance.alpha * pattern.delta - instance.beta * pattern.rho
    if rc <= RC_EPS:
        return None
    return pattern


# -- column generation -------------------------------------------------------


@dataclass
class CgResult:
    converged: bool
    lp_bound: float
    rmp: RmpSolution | None
    admissible: list[int]
    n_iterations: int = 0
    n_added: int = 0


class _Pool:
    """Global column pool with dedup by (surgeon, block set)."""

    def __init__(self):
        self.columns: list[Pattern] = []
        self._index: dict = {}

    def add(self, pattern: Pattern) -> bool:
        key = (pattern.surgeon, pattern.blocks)
        if key in self._index:
            return False
        self._index[key] = len(self.columns)
        self.columns.append(pattern)
        return True

    def __contains__(self, key) -> bool:
        return key in self._index


def run_column_generation(
    instance: Instance,
    pool: _Pool,
    branch_history: BranchHistory,
    options: BnpOptions,
    lcr_store: LazyCutStore,
    oracle: FollowerOracle,
    stats: SolveStats,
    deadline: float | None = None,
) -> CgResult:
    """Alternate master and pricing until no surgeon yields a column with
    positive reduced cost; may stop early on the deadline (non-converged)."""
    for s in instance.surgeons:
        if not any(
            col.surgeon == s and col.admissible(branch_history) for col in pool.columns
        ):
            pool.add(default_pattern(instance, s, branch_history, oracle))

    n_iter = 0
    n_added_total = 0
    rmp = None
    admissible: list[int] = []
    while True:
        admissible = [
            k for k, col in enumerate(pool.columns) if col.admissible(branch_history)
        ]
        t_mp = time.perf_counter()
        rmp = solve_rmp(pool.columns, instance, branch_history, admissible)
        stats.time_master += time.perf_counter() - t_mp
        n_iter += 1
        stats.n_cgi += 1
        if deadline is not None and time.perf_counter() > deadline:
            return CgResult(False, -math.inf, rmp, admissible, n_iter, n_added_total)

        added = 0
        t_sp = time.perf_counter()
        for s in instance.surgeons:
            time_left = None if deadline is None else deadline - time.perf_counter()
            if time_left is not None and time_left <= 0:
                stats.time_subproblem += time.perf_counter() - t_sp
                return CgResult(False, -math.inf, rmp, admissible, n_iter, n_added_total)
            warm = _best_warm_patterns(instance, pool, s, branch_history, rmp)
            pattern = price_surgeon(
                instance,
                s,
                rmp.lam,
                rmp.mu[s],
                branch_history,
                lcr_store,
                options.cut_kind,
                oracle,
                warm_patterns=warm,
                use_lcr=options.use_lcr,
                time_limit=time_left,
                stats=stats,
            )
            if pattern is not None and pool.add(pattern):
                added += 1
                if not options.multi_pattern:
                    break
        stats.time_subproblem += time.perf_counter() - t_sp
        n_added_total += added
        stats.n_cols += added
        if added == 0:
            return CgResult(True, rmp.objective, rmp, admissible, n_iter, n_added_total)


def _best_warm_patterns(instance, pool, surgeon, branch_history, rmp, limit=2):
    """Best pooled columns under the current duals, to seed the pricing
    incumbent."""
    scored = []
    for col in pool.columns:
        if col.surgeon != surgeon or not col.admissible(branch_history):
            continue
        rc = sum(
            _block_dual_weight(instance, instance.block(b), rmp.lam) for b in col.blocks
        )
        rc += rmp.mu[surgeon] + float(
            instance.alpha * col.delta - instance.beta * col.rho
        )
        scored.append((rc, col))
    scored.sort(key=lambda t: -t[0])
    return [col for (_rc, col) in scored[:limit]]


def select_branch_variable(y_values: dict, instance: Instance) -> tuple[str, int]:
    """Most fractional aggregated incidence; ties by surgeon then block."""
    sidx = {s: i for i, s in enumerate(instance.surgeons)}
    best = None
    for (s, b), v in y_values.items():
        if FRAC_TOL < v < 1.0 - FRAC_TOL:
            key = (abs(v - 0.5), sidx[s], b)
            if best is None or key < best[0]:
                best = (key, (s, b))
    if best is None:
        raise ValueError("no fractional block incidence to branch on")
    return best[1]


def master_heuristic(
    columns: list[Pattern],
    instance: Instance,
    branch_history: BranchHistory = (),
    admissible: list[int] | None = None,
    time_limit: float | None = None,
) -> Assignment | None:
    """Solve the restricted master to integrality over the known columns;
    any solution is bilevel feasible because the columns are."""
    if admissible is None:
        admissible = [k for k, col in enumerate(columns) if col.admissible(branch_history)]
    lp = LinearProgram(sense=MIN)
    for k in admissible:
        lp.add_var(("th", k), 0, 1, obj=columns[k].cost(instance))
    lp.objective_offset = instance.alpha * instance.capacity
    for (d, t) in instance.grid_points():
        blocks_here = instance.overlap_sets[(d, t)]
        coeffs = {}
        for k in admissible:
            hits = len(columns[k].blocks & blocks_here)
            if hits:
                coeffs[("th", k)] = hits
        lp.add_constr(coeffs, LE, instance.rooms)
    for s in instance.surgeons:
        lp.add_constr(
            {("th", k): 1 for k in admissible if columns[k].surgeon == s}, EQ, 1
        )
    res = solve_mip(
        MipProblem(lp, binaries=set(lp.var_ids)), time_limit=time_limit
    )
    if res.incumbent is None:
        return None
    chosen = [k for k in admissible if res.incumbent[("th", k)] == 1]
    return _assignment_from_columns([columns[k] for k in chosen])


def _assignment_from_columns(chosen: list[Pattern]) -> Assignment:
    y = [(c.surgeon, b) for c in chosen for b in sorted(c.blocks)]
    x = [(pid, b) for c in chosen for (pid, b) in c.x_detail]
    return Assignment.from_pairs(y, x)


# -- search ------------------------------------------------------------------


def solve_bnp(
    instance: Instance, options: BnpOptions | None = None
) -> tuple[Assignment | None, SolveStats]:
    options = options or BnpOptions()
    t0 = time.perf_counter()
    deadline = t0 + options.time_limit if options.time_limit else None
    stats = SolveStats()
    oracle = FollowerOracle(instance)
    lcr_store = LazyCutStore()
    pool = _Pool()
    for s in instance.surgeons:
        pool.add(make_pattern(instance, oracle, s, ()))

    incumbent: Assignment | None = None
    incumbent_F: Fraction | None = None

    def offer(assignment: Assignment | None):
        nonlocal incumbent, incumbent_F
        if assignment is None:
            return
        F = leader_objective(instance, assignment)
        if incumbent_F is None or F < incumbent_F:
            incumbent, incumbent_F = assignment, F

    if options.use_initial_heuristic:
        start, blocks_by_surgeon, seed_cuts = initial_heuristic(
            instance, options.cut_kind, oracle
        )
        offer(start)
        for s, held in blocks_by_surgeon.items():
            pool.add(make_pattern(instance, oracle, s, held))
        if options.use_lcr:
            for cut in seed_cuts:
                if lcr_store.record(cut):
                    stats.n_lazy_cuts += 1

    trace = open(options.trace_file, "w") if options.trace_file else None

    def tr(line):
        if trace:
            trace.write(line + "\n")

    # Best-bound node queue; the y=1 child is pushed first so it wins ties.
    seq = 0
    heap: list[tuple[float, int, BranchHistory]] = [(-math.inf, seq, ())]
    status = OPTIMAL
    best_open = -math.inf
    root_bound: float | None = None

    while heap:
        if deadline is not None and time.perf_counter() > deadline:
            status = "TIME_LIMIT"
            break
        if options.node_limit is not None and stats.n_nodes >= options.node_limit:
            status = "NODE_LIMIT"
            break
        node_bound, _sq, bh = heapq.heappop(heap)
        best_open = node_bound
        if incumbent_F is not None and node_bound >= float(incumbent_F) - 1e-7:
            heap.clear()
            best_open = float(incumbent_F)
            break
        stats.n_nodes += 1
        try:
            cg = run_column_generation(
                instance, pool, bh, options, lcr_store, oracle, stats, deadline
            )
        except NodeInfeasible:
            tr(f"node={stats.n_nodes} bound=inf branch={bh[-1] if bh else None} pruned=infeasible")
            continue
        if not cg.converged:
            status = "TIME_LIMIT"
            seq += 1
            heapq.heappush(heap, (node_bound, seq, bh))
            break
        lp_bound = max(cg.lp_bound, node_bound)
        if root_bound is None:
            root_bound = cg.lp_bound
            stats.F_lpr_root = cg.lp_bound
        tr(
            f"node={stats.n_nodes} bound={lp_bound:.6f} "
            f"branch={bh[-1] if bh else None} cols={len(cg.admissible)}"
        )
        if incumbent_F is not None and lp_bound >= float(incumbent_F) - 1e-7:
            continue
        fractional = {
            key: v for key, v in cg.rmp.y.items() if FRAC_TOL < v < 1.0 - FRAC_TOL
        }
        if not fractional:
            # Integral incidences: each surgeon's support is one block set.
            chosen = []
            for s in instance.surgeons:
                blocks = frozenset(b for (ss, b), v in cg.rmp.y.items() if ss == s and v > 0.5)
                cands = [
                    pool.columns[k]
                    for k in cg.admissible
                    if pool.columns[k].surgeon == s and pool.columns[k].blocks == blocks
                ]
                chosen.append(cands[0])
            offer(_assignment_from_columns(chosen))
            continue
        t_mh = time.perf_counter()
        mh_left = None if deadline is None else max(deadline - time.perf_counter(), 0.0)
        offer(
            master_heuristic(pool.columns, instance, bh, cg.admissible, time_limit=mh_left)
        )
        stats.time_master += time.perf_counter() - t_mh
        if incumbent_F is not None and lp_bound >= float(incumbent_F) - 1e-7:
            continue
        s, b = select_branch_variable(fractional, instance)
        for e in (1, 0):
            seq += 1
            heapq.heappush(heap, (lp_bound, seq, bh + ((s, b, e),)))

    if heap:
        open_bounds = [nb for nb, *_r in heap] + [best_open]
    else:
        open_bounds = [best_open]
    global_bound = min(open_bounds)
    if status == OPTIMAL:
        global_bound = float(incumbent_F) if incumbent_F is not None else best_open
    elif incumbent_F is not None:
        global_bound = min(global_bound, float(incumbent_F))

    if trace:
        trace.close()

    stats.status = status
    stats.optimal = status == OPTIMAL and incumbent is not None
    stats.feasible_found = incumbent is not None
    stats.bound = global_bound
    if incumbent is not None:
        stats.F = incumbent_F
        report = check_single_level_feasibility(instance, incumbent)
        if not report.ok:
            raise RuntimeError(f"incumbent violates single-level constraints: {report.violations}")
        rows = check_bilevel_feasibility(instance, incumbent, oracle)
        if not all(ok for (*_x, ok) in rows):
            raise RuntimeError(f"incumbent is not bilevel feasible: {rows}")
    stats.finalize_gap()
    stats.time_total = time.perf_counter() - t0
    return incumbent, stats
