"""Exact follower problem: one surgeon packing patients into held blocks.

The plain mode maximises the surgeon's own priority total. The optimistic
modes break ties among priority-optimal plans in the leader's favour by
adding the leader-aligned term scaled down by a constant strictly larger
than its maximum magnitude, so the primary optimum is never affected.

Solutions are canonical in the block-length profile: the model is always
built over the multiset of block lengths in a fixed order, which makes the
chosen patient detail a function of (surgeon, profile, mode) alone. That
determinism is what allows assignment-fixing lazy constraints derived from
these solves to be consistent with each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

from .domain import Assignment, Instance, check_single_level_feasibility
from .optkern import LE, MAX, LinearProgram, MipProblem, solve_mip


class FollowerMode(Enum):
    PURE = "pure"
    OPTIMISTIC_COMPACT = "optimistic_compact"
    OPTIMISTIC_SUBPROBLEM = "optimistic_subproblem"


@dataclass(frozen=True)
class FollowerResult:
    """One surgeon's optimal response to a set of assigned blocks."""

    x_prime: dict  # patient id -> block id
    f_prime: int  # plain-mode optimum value
    delta: int  # slots of surgery assigned
    rho: int  # leader priority of omitted patients


def follower_big_m(instance: Instance, surgeon: str) -> int:
    """Activation constant for lazy constraints: the surgeon's total
    follower priority (an upper bound on any follower objective)."""
    return sum(p.prio_follower for p in instance.patients_of(surgeon))


def optimistic_m_prime(instance: Instance, surgeon: str) -> Fraction:
    """Scale-down constant for the optimistic secondary objective; strictly
    exceeds the largest magnitude the secondary term can take."""
    total_lp = sum(p.prio_leader for p in instance.patients_of(surgeon))
    return instance.alpha * instance.capacity + instance.beta * total_lp + 1


class FollowerOracle:
    """Memoising follower solver for one instance.

    Results are cached per (surgeon, sorted length profile, optimistic?),
    which both speeds up repeated feasibility callbacks and pins down the
    tie-break: equal profiles always yield the same patient detail.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self._cache: dict = {}

    def solve(
        self, surgeon: str, block_ids: Iterable[int], mode: FollowerMode = FollowerMode.PURE
    ) -> FollowerResult:
        inst = self.instance
        # Canonical bin order: by length, then day, then start.
        blocks = sorted(
            (inst.block(b) for b in block_ids), key=lambda b: (b.length, b.day, b.start)
        )
        caps = tuple(b.length for b in blocks)
        per_bin = self._solve_caps(surgeon, caps, mode)
        x_prime = {}
        for k, chosen in enumerate(per_bin):
            for pid in chosen:
                x_prime[pid] = blocks[k].id
        patients = {p.id: p for p in inst.patients_of(surgeon)}
        f_prime = sum(patients[pid].prio_follower for pid in x_prime)
        delta = sum(patients[pid].duration for pid in x_prime)
        rho = sum(p.prio_leader for p in inst.patients_of(surgeon) if p.id not in x_prime)
        return FollowerResult(x_prime=x_prime, f_prime=f_prime, delta=delta, rho=rho)

    def _solve_caps(self, surgeon: str, caps: tuple[int, ...], mode: FollowerMode):
        optimistic = mode is not FollowerMode.PURE
        key = (surgeon, caps, optimistic)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        per_bin = self._solve_uncached(surgeon, caps, optimistic)
        self._cache[key] = per_bin
        return per_bin

    def _solve_uncached(self, surgeon: str, caps: Sequence[int], optimistic: bool):
        inst = self.instance
        patients = inst.patients_of(surgeon)
        if not caps or not patients:
            return tuple(() for _ in caps)
        lp = LinearProgram(sense=MAX)
        m_prime = optimistic_m_prime(inst, surgeon)
        for p in patients:
            coeff = Fraction(p.prio_follower)
            if optimistic:
                # Leader-aligned tie-break: reward planned duration and the
                # leader priority of planned patients (constant terms of
                # the leader objective drop out of the argmax).
                coeff += (inst.alpha * p.duration + inst.beta * p.prio_leader) / m_prime
            for k in range(len(caps)):
                lp.add_var(("x", p.id, k), 0, 1, obj=coeff)
        for p in patients:
            lp.add_constr({("x", p.id, k): 1 for k in range(len(caps))}, LE, 1)
        for k, cap in enumerate(caps):
            lp.add_constr({("x", p.id, k): p.duration for p in patients}, LE, cap)
        res = solve_mip(MipProblem(lp, binaries=set(lp.var_ids)))
        if res.status != "OPTIMAL":  # pragma: no cover - bounded model
            raise RuntimeError(f"follower solve ended with status {res.status}")
        per_bin = []
        for k in range(len(caps)):
            chosen = tuple(p.id for p in patients if res.incumbent[("x", p.id, k)] == 1)
            per_bin.append(chosen)
        return tuple(per_bin)


def solve_follower(
    instance: Instance,
    surgeon: str,
    assigned_blocks: Iterable[int],
    mode: FollowerMode = FollowerMode.PURE,
    oracle: FollowerOracle | None = None,
) -> FollowerResult:
    """Solve one surgeon's patient-packing problem over the given blocks."""
    oracle = oracle or FollowerOracle(instance)
    return oracle.solve(surgeon, assigned_blocks, mode)


def check_bilevel_feasibility(
    instance: Instance, assignment: Assignment, oracle: FollowerOracle | None = None
) -> list[tuple[str, int, int, bool]]:
    """Compare each surgeon's proposed value f_s with their optimum f'_s
    given the received blocks. The assignment is an equilibrium iff every
    row is feasible."""
    oracle = oracle or FollowerOracle(instance)
    rows = []
    for s in instance.surgeons:
        f_s = assignment.follower_value(instance, s)
        res = oracle.solve(s, assignment.blocks_of(s), FollowerMode.PURE)
        rows.append((s, f_s, res.f_prime, f_s == res.f_prime))
    return rows


def is_bilevel_feasible(
    instance: Instance, assignment: Assignment, oracle: FollowerOracle | None = None
) -> bool:
    single = check_single_level_feasibility(instance, assignment)
    if not single.ok:
        return False
    return all(ok for (_s, _f, _fp, ok) in check_bilevel_feasibility(instance, assignment, oracle))
