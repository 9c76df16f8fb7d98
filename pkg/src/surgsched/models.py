"""Shared construction of the single-level scheduling polytope.

Builds the block-assignment and patient-planning variables with the room
overlap, per-day, horizon, availability, single-scheduling, and capacity
rows. Used by the compact solver and by the centralized / decentralized
reference models; the pricing subproblem builds its own per-surgeon
variant.
"""

from __future__ import annotations

from fractions import Fraction

from .cuts import build_q_link, q_variables
from .domain import Assignment, Instance
from .optkern import LE, LinearProgram


def add_schedule_vars(lp: LinearProgram, instance: Instance) -> None:
    """Declare y[s, b] (zero-fixed where unavailable) and x[p, b]."""
    for s in instance.surgeons:
        for b in instance.blocks:
            ub = 1 if instance.available(s, b.id) else 0
            lp.add_var(("y", s, b.id), 0, ub)
    for p in instance.patients:
        for b in instance.blocks:
            lp.add_var(("x", p.id, b.id), 0, 1)


def add_schedule_rows(lp: LinearProgram, instance: Instance) -> None:
    """Room overlap, per-day and horizon block limits, at-most-once
    scheduling, and per-(surgeon, block) capacity linking x to y."""
    for (d, t) in instance.grid_points():
        block_ids = instance.overlap_sets[(d, t)]
        coeffs = {("y", s, b): 1 for s in instance.surgeons for b in sorted(block_ids)}
        lp.add_constr(coeffs, LE, instance.rooms, name=("rooms", d, t))
    for s in instance.surgeons:
        for d in range(instance.days):
            coeffs = {("y", s, b.id): 1 for b in instance.blocks_on_day(d)}
            lp.add_constr(coeffs, LE, instance.v_day, name=("vday", s, d))
        lp.add_constr(
            {("y", s, b.id): 1 for b in instance.blocks}, LE, instance.v_horizon,
            name=("vhor", s),
        )
    for p in instance.patients:
        lp.add_constr(
            {("x", p.id, b.id): 1 for b in instance.blocks}, LE, 1, name=("once", p.id)
        )
    for s in instance.surgeons:
        patients = instance.patients_of(s)
        for b in instance.blocks:
            coeffs = {("x", p.id, b.id): p.duration for p in patients}
            coeffs[("y", s, b.id)] = -b.length
            lp.add_constr(coeffs, LE, 0, name=("cap", s, b.id))


def add_count_indicators(lp: LinearProgram, instance: Instance) -> None:
    """Declare q[s, l, w] with their linkage rows for every surgeon."""
    for s in instance.surgeons:
        for vid in q_variables(instance, s):
            lp.add_var(vid, 0, 1)
        for coeffs, sense, rhs in build_q_link(instance, s):
            lp.add_constr(coeffs, sense, rhs, name=("qlink",) + tuple(coeffs)[:1])


def leader_objective_terms(instance: Instance) -> tuple[dict, Fraction]:
    """Leader objective as per-x coefficients plus a constant offset:
    scheduling patient p saves alpha*duration + beta*leader priority."""
    coeffs = {}
    for p in instance.patients:
        gain = instance.alpha * p.duration + instance.beta * p.prio_leader
        for b in instance.blocks:
            coeffs[("x", p.id, b.id)] = -gain
    offset = instance.alpha * instance.capacity + instance.beta * sum(
        p.prio_leader for p in instance.patients
    )
    return coeffs, offset


def follower_sum_terms(instance: Instance) -> dict:
    """Total follower priority of planned patients, as x coefficients."""
    return {
        ("x", p.id, b.id): p.prio_follower
        for p in instance.patients
        for b in instance.blocks
    }


def assignment_from_values(instance: Instance, values: dict) -> Assignment:
    y = [
        (s, b.id)
        for s in instance.surgeons
        for b in instance.blocks
        if values.get(("y", s, b.id), 0) == 1
    ]
    x = [
        (p.id, b.id)
        for p in instance.patients
        for b in instance.blocks
        if values.get(("x", p.id, b.id), 0) == 1
    ]
    return Assignment.from_pairs(y, x)


def binary_ids(lp: LinearProgram) -> set:
    return set(lp.var_ids)
