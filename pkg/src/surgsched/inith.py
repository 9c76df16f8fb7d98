"""Constructive start heuristic: iterative block allocation plus follower
repair.

Each round packs, for every surgeon and block length, the leader-best
knapsack of still-unscheduled patients, then a small selection MIP adds at
most one candidate block per surgeon (earliest starts preferred through an
exact tie-break term too small to flip a value comparison). When no block
can be added, tentative patient picks are discarded and each surgeon's
actual optimal response to the final block schedule is computed, so the
result is bilevel feasible by construction. The responses double as seed
columns and seed lazy constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .cuts import BlockCountProfile, CutKind, LazyCut
from .domain import Assignment, Instance, Patient
from .follower import FollowerMode, FollowerOracle
from .optkern import LE, MAX, OPTIMAL, LinearProgram, MipProblem, solve_mip


@dataclass(frozen=True)
class CandidateAssignment:
    """A tentative (surgeon, block) addition with its packed patients."""

    surgeon: str
    block: int
    patients: frozenset[str]
    delta_bar: int  # slots packed
    rho_bar: int  # leader priority packed


def knapsack_per_length(
    instance: Instance, surgeon: str, pool: list[Patient], length: int
) -> frozenset[str]:
    """Leader-best patient subset of total duration at most `length`."""
    fitting = [p for p in pool if p.duration <= length]
    if length <= 0 or not fitting:
        return frozenset()
    lp = LinearProgram(sense=MAX)
    for p in fitting:
        lp.add_var(p.id, 0, 1, obj=instance.alpha * p.duration + instance.beta * p.prio_leader)
    lp.add_constr({p.id: p.duration for p in fitting}, LE, length)
    res = solve_mip(MipProblem(lp, binaries=set(lp.var_ids)))
    return frozenset(p.id for p in fitting if res.incumbent[p.id] == 1)


def start_tiebreak_epsilon(instance: Instance) -> Fraction:
    """Strictly smaller than any possible value gap when weights and data
    are integral, so preferring early starts never flips a comparison."""
    return Fraction(1, 1 + sum(b.start for b in instance.blocks))


def allocate_step(
    instance: Instance,
    candidates: list[CandidateAssignment],
    schedule: set[tuple[str, int]],
) -> list[tuple[str, int]]:
    """Select candidate additions: at most one new block per surgeon,
    respecting rooms / per-day / horizon limits jointly with the current
    schedule. Returns the chosen (surgeon, block) pairs (possibly empty)."""
    candidates = [
        c
        for c in candidates
        if (c.surgeon, c.block) not in schedule and instance.available(c.surgeon, c.block)
    ]
    if not candidates:
        return []
    eps = start_tiebreak_epsilon(instance)
    lp = LinearProgram(sense=MAX)
    for i, c in enumerate(candidates):
        value = (
            instance.alpha * c.delta_bar
            + instance.beta * c.rho_bar
            - eps * instance.block(c.block).start
        )
        lp.add_var(i, 0, 1, obj=value)
    surgeons = sorted({c.surgeon for c in candidates})
    for s in surgeons:
        lp.add_constr({i: 1 for i, c in enumerate(candidates) if c.surgeon == s}, LE, 1)
    for (d, t) in instance.grid_points():
        blocks_here = instance.overlap_sets[(d, t)]
        occupied = sum(1 for (_s, b) in schedule if b in blocks_here)
        coeffs = {i: 1 for i, c in enumerate(candidates) if c.block in blocks_here}
        if coeffs:
            lp.add_constr(coeffs, LE, instance.rooms - occupied)
    for s in surgeons:
        held = [b for (ss, b) in schedule if ss == s]
        for d in range(instance.days):
            day_ids = {b.id for b in instance.blocks_on_day(d)}
            coeffs = {
                i: 1
                for i, c in enumerate(candidates)
                if c.surgeon == s and c.block in day_ids
            }
            if coeffs:
                used = sum(1 for b in held if b in day_ids)
                lp.add_constr(coeffs, LE, instance.v_day - used)
        coeffs = {i: 1 for i, c in enumerate(candidates) if c.surgeon == s}
        lp.add_constr(coeffs, LE, instance.v_horizon - len(held))
    res = solve_mip(MipProblem(lp, binaries=set(lp.var_ids)))
    if res.status != OPTIMAL:  # pragma: no cover - bounded model
        raise RuntimeError(f"allocation step ended with {res.status}")
    return [
        (c.surgeon, c.block)
        for i, c in enumerate(candidates)
        if res.incumbent[i] == 1
    ]


def initial_heuristic(
    instance: Instance,
    cut_kind: CutKind = CutKind.ASSIGNMENT,
    oracle: FollowerOracle | None = None,
):
    """Build a bilevel-feasible assignment plus seed columns and seed cuts.

    Returns (assignment, per-surgeon block lists, seed_cuts); the caller
    turns block lists into columns with its own pattern constructor.
    """
    oracle = oracle or FollowerOracle(instance)
    schedule: set[tuple[str, int]] = set()
    pools: dict[str, list[Patient]] = {s: list(instance.patients_of(s)) for s in instance.surgeons}

    while True:
        candidates: list[CandidateAssignment] = []
        for s in instance.surgeons:
            if not pools[s]:
                continue
            for l in instance.block_lengths():
                chosen = knapsack_per_length(instance, s, pools[s], l)
                if not chosen:
                    continue
                by_id = {p.id: p for p in pools[s]}
                delta_bar = sum(by_id[pid].duration for pid in chosen)
                rho_bar = sum(by_id[pid].prio_leader for pid in chosen)
                for b in instance.blocks:
                    if b.length == l:
                        candidates.append(
                            CandidateAssignment(s, b.id, chosen, delta_bar, rho_bar)
                        )
        added = allocate_step(instance, candidates, schedule)
        if not added:
            break
        chosen_by_pair = {(c.surgeon, c.block): c for c in candidates}
        for pair in added:
            schedule.add(pair)
            c = chosen_by_pair[pair]
            pools[c.surgeon] = [p for p in pools[c.surgeon] if p.id not in c.patients]

    # Repair: drop tentative picks, give each surgeon their true optimum.
    y_pairs = sorted(schedule)
    x_pairs = []
    seed_cuts = []
    blocks_by_surgeon = {s: [b for (ss, b) in y_pairs if ss == s] for s in instance.surgeons}
    for s in instance.surgeons:
        held = blocks_by_surgeon[s]
        pure = oracle.solve(s, held, FollowerMode.PURE)
        x_pairs.extend(sorted(pure.x_prime.items()))
        profile = BlockCountProfile.of(instance, held)
        if cut_kind is CutKind.OBJECTIVE:
            seed_cuts.append(LazyCut(CutKind.OBJECTIVE, s, profile, f_c=pure.f_prime))
        else:
            # Assignment cuts must pin the leader-best optimal response.
            opt = oracle.solve(s, held, FollowerMode.OPTIMISTIC_SUBPROBLEM)
            seed_cuts.append(
                LazyCut(CutKind.ASSIGNMENT, s, profile, pa_set=frozenset(opt.x_prime.keys()))
            )
    assignment = Assignment.from_pairs(y_pairs, x_pairs)
    return assignment, blocks_by_surgeon, seed_cuts
