"""Independent brute-force oracles for small instances.

Everything here enumerates: feasible block schedules y (respecting rooms,
per-day, horizon, and availability limits), and per surgeon all patient
packings. Objectives are recomputed inline from first principles so the
oracle shares no solver code path with the package.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from surgsched.domain import Assignment, Instance


def _surgeon_blocksets(instance: Instance, s: str) -> list[tuple[int, ...]]:
    """All block subsets one surgeon may hold under v_day/v_horizon/N."""
    usable = [b for b in instance.blocks if instance.available(s, b.id)]
    out = []
    for r in range(instance.v_horizon + 1):
        for combo in itertools.combinations(usable, r):
            per_day: dict[int, int] = {}
            ok = True
            for b in combo:
                per_day[b.day] = per_day.get(b.day, 0) + 1
                if per_day[b.day] > instance.v_day:
                    ok = False
                    break
            if ok:
                out.append(tuple(sorted(b.id for b in combo)))
    return out


def _rooms_ok(instance: Instance, held: dict[str, tuple[int, ...]]) -> bool:
    for (_d, _t), block_ids in instance.overlap_sets.items():
        active = sum(1 for s in held for b in held[s] if b in block_ids)
        if active > instance.rooms:
            return False
    return True


def _packings(instance: Instance, s: str, block_ids: tuple[int, ...]):
    """Yield every capacity-feasible patient->block mapping for surgeon s."""
    patients = instance.patients_of(s)
    caps = {b: instance.block(b).length for b in block_ids}
    choices = [(None,) + tuple(block_ids) for _ in patients]

    def rec(i, loads, current):
        if i == len(patients):
            yield dict(current)
            return
        p = patients[i]
        for c in choices[i]:
            if c is None:
                yield from rec(i + 1, loads, current)
            else:
                if loads[c] + p.duration <= caps[c]:
                    loads[c] += p.duration
                    current[p.id] = c
                    yield from rec(i + 1, loads, current)
                    del current[p.id]
                    loads[c] -= p.duration

    yield from rec(0, {b: 0 for b in block_ids}, {})


def _best_responses(instance: Instance, s: str, block_ids: tuple[int, ...]):
    """All follower-optimal packings, each with its leader contribution.

    Returns (f_opt, [(leader_term, packing), ...]) where leader_term is the
    surgeon's additive share of F: -sum(alpha*dur + beta*prio_leader) over
    scheduled patients (constants live outside).
    """
    patients = {p.id: p for p in instance.patients_of(s)}
    best_f = 0
    rows = []
    for packing in _packings(instance, s, block_ids):
        f = sum(patients[pid].prio_follower for pid in packing)
        term = -sum(
            instance.alpha * patients[pid].duration + instance.beta * patients[pid].prio_leader
            for pid in packing
        )
        rows.append((f, term, packing))
        best_f = max(best_f, f)
    opts = [(term, packing) for (f, term, packing) in rows if f == best_f]
    return best_f, opts


def _constant_offset(instance: Instance) -> Fraction:
    return instance.alpha * instance.capacity + instance.beta * sum(
        p.prio_leader for p in instance.patients
    )


def _iter_feasible_y(instance: Instance):
    per_surgeon = {s: _surgeon_blocksets(instance, s) for s in instance.surgeons}
    surgeons = list(instance.surgeons)

    def rec(i, held):
        if i == len(surgeons):
            yield dict(held)
            return
        s = surgeons[i]
        for bs in per_surgeon[s]:
            held[s] = bs
            if _rooms_ok(instance, held):
                yield from rec(i + 1, held)
        del held[s]

    yield from rec(0, {})


def bilevel_optimum(instance: Instance) -> Fraction:
    """Optimal leader value over the inducible region (optimistic)."""
    best = None
    cache: dict = {}
    for held in _iter_feasible_y(instance):
        total = _constant_offset(instance)
        for s, bs in held.items():
            if (s, bs) not in cache:
                _f, opts = _best_responses(instance, s, bs)
                cache[(s, bs)] = min(term for (term, _p) in opts)
            total += cache[(s, bs)]
        if best is None or total < best:
            best = total
    return best


def centralized_optimum(instance: Instance) -> Fraction:
    """Optimal leader value ignoring follower optimality."""
    best = None
    cache: dict = {}
    for held in _iter_feasible_y(instance):
        total = _constant_offset(instance)
        for s, bs in held.items():
            if (s, bs) not in cache:
                terms = [
                    -sum(
                        instance.alpha * p.duration + instance.beta * p.prio_leader
                        for p in instance.patients_of(s)
                        if p.id in packing
                    )
                    for packing in _packings(instance, s, bs)
                ]
                cache[(s, bs)] = min(terms)
            total += cache[(s, bs)]
        if best is None or total < best:
            best = total
    return best


def decentralized_optimum(instance: Instance, leader_best: bool = True):
    """Max total follower value; among maximisers picks the leader-best
    (or worst) leader value. Returns (sum_f, F)."""
    best_sum = None
    best_F = None
    cache: dict = {}
    for held in _iter_feasible_y(instance):
        tot_f = 0
        tot_term = _constant_offset(instance)
        for s, bs in held.items():
            if (s, bs) not in cache:
                f_opt, opts = _best_responses(instance, s, bs)
                lead = min(t for (t, _p) in opts) if leader_best else max(t for (t, _p) in opts)
                cache[(s, bs)] = (f_opt, lead)
            f_opt, lead = cache[(s, bs)]
            tot_f += f_opt
            tot_term += lead
        if (
            best_sum is None
            or tot_f > best_sum
            or (tot_f == best_sum and (tot_term < best_F if leader_best else tot_term > best_F))
        ):
            best_sum, best_F = tot_f, tot_term
    return best_sum, best_F


def enumerate_bilevel_feasible(instance: Instance):
    """Yield every bilevel-feasible Assignment (can be large; use on tiny
    instances only)."""
    for held in _iter_feasible_y(instance):
        per_surgeon_opts = []
        for s in instance.surgeons:
            _f, opts = _best_responses(instance, s, held[s])
            per_surgeon_opts.append([p for (_t, p) in opts])
        y_pairs = [(s, b) for s in held for b in held[s]]
        for combo in itertools.product(*per_surgeon_opts):
            x_pairs = [(pid, b) for packing in combo for pid, b in packing.items()]
            yield Assignment.from_pairs(y_pairs, x_pairs)
