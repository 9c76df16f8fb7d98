"""Core data model for the bilevel surgeon-scheduling problem.

An instance spans a short horizon of days, each day offering a catalogue of
operational blocks (contiguous slot ranges with fixed start and length).
The leader (surgeon head) assigns blocks to surgeons; each surgeon packs
patients from their own waiting list into the received blocks.

All objects are immutable after construction and all operations are pure,
so instances and assignments can be shared freely across threads. Objective
arithmetic uses exact rationals to keep optimality comparisons exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping


@dataclass(frozen=True)
class Patient:
    """An elective patient on one surgeon's waiting list.

    Durations are in time slots (1 slot = 15 minutes). Priorities are the
    leader's and the operating surgeon's preference weights for including
    the patient in the plan; both are positive integers.
    """

    id: str
    surgeon: str
    duration: int
    prio_leader: int
    prio_follower: int

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError(f"patient {self.id}: duration must be >= 1 slot")
        if self.prio_leader < 1 or self.prio_follower < 1:
            raise ValueError(f"patient {self.id}: priorities must be >= 1")


@dataclass(frozen=True)
class Block:
    """An operational block: day index, start slot, and length in slots."""

    id: int
    day: int
    start: int
    length: int

    @property
    def end(self) -> int:
        return self.start + self.length


def enumerate_blocks(
    days: int, slots_per_day: int, lengths: Iterable[int], starts: Iterable[int]
) -> list[Block]:
    """Build the full block catalogue: every (day, start, length) that fits.

    Ordering is deterministic by (day, start, length) and fixes the block
    ids used everywhere downstream. An empty result signals that no
    (start, length) pair fits in the day and the configuration is broken.
    """
    lengths = sorted(set(lengths))
    starts = sorted(set(starts))
    if any(l < 1 for l in lengths) or any(t < 0 for t in starts):
        raise ValueError("block lengths must be positive and starts non-negative")
    blocks = []
    for d in range(days):
        for t in starts:
            for l in lengths:
                if t + l <= slots_per_day:
                    blocks.append(Block(id=len(blocks), day=d, start=t, length=l))
    return blocks


def build_overlap_sets(blocks: Iterable[Block]) -> dict[tuple[int, int], frozenset[int]]:
    """Map each (day, grid start time) to the ids of blocks covering it.

    A block covers grid point t iff start <= t < start + length. The grid
    is the set of distinct start times present in the catalogue.
    """
    blocks = list(blocks)
    days = sorted({b.day for b in blocks})
    grid = sorted({b.start for b in blocks})
    overlap: dict[tuple[int, int], frozenset[int]] = {}
    for d in days:
        day_blocks = [b for b in blocks if b.day == d]
        for t in grid:
            overlap[(d, t)] = frozenset(b.id for b in day_blocks if b.start <= t < b.end)
    return overlap


@dataclass(frozen=True)
class Instance:
    """Full problem data for one planning horizon.

    Rooms are identical and never named: only the count matters, which is
    why the room constraint is aggregated over overlap sets. `capacity` is
    the OR time allotted to the surgeon group, in slots.
    """

    days: int
    rooms: int
    slots_per_day: int
    blocks: tuple[Block, ...]
    overlap_sets: Mapping[tuple[int, int], frozenset[int]]
    surgeons: tuple[str, ...]
    patients: tuple[Patient, ...]
    unavailability: frozenset[tuple[str, int]]  # (surgeon, block id) pairs
    v_day: int
    v_horizon: int
    capacity: int
    alpha: Fraction
    beta: Fraction
    lengths: tuple[int, ...] = ()
    starts: tuple[int, ...] = ()
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        by_surgeon: dict[str, list[Patient]] = {s: [] for s in self.surgeons}
        for p in self.patients:
            if p.surgeon not in by_surgeon:
                raise ValueError(f"patient {p.id} references unknown surgeon {p.surgeon}")
            by_surgeon[p.surgeon].append(p)
        object.__setattr__(self, "_by_surgeon", {s: tuple(ps) for s, ps in by_surgeon.items()})
        object.__setattr__(self, "_block_by_id", {b.id: b for b in self.blocks})
        for ids in self.overlap_sets.values():
            for bid in ids:
                if bid not in self._block_by_id:
                    raise ValueError(f"overlap set references unknown block {bid}")

    # -- lookups -----------------------------------------------------------

    def patients_of(self, surgeon: str) -> tuple[Patient, ...]:
        return self._by_surgeon[surgeon]

    def block(self, block_id: int) -> Block:
        return self._block_by_id[block_id]

    def blocks_on_day(self, day: int) -> list[Block]:
        return [b for b in self.blocks if b.day == day]

    def block_lengths(self) -> list[int]:
        """Distinct block lengths present in the catalogue, ascending."""
        return sorted({b.length for b in self.blocks})

    def available(self, surgeon: str, block_id: int) -> bool:
        return (surgeon, block_id) not in self.unavailability

    def grid_points(self) -> list[tuple[int, int]]:
        return sorted(self.overlap_sets.keys())

    def total_leader_priority(self, surgeon: str | None = None) -> int:
        ps = self.patients if surgeon is None else self.patients_of(surgeon)
        return sum(p.prio_leader for p in ps)


def make_instance(
    *,
    days: int,
    rooms: int,
    slots_per_day: int,
    lengths: Iterable[int],
    starts: Iterable[int],
    surgeons: Mapping[str, Iterable[Patient]],
    v_day: int,
    v_horizon: int,
    alpha=1,
    beta=1,
    unavailability: Iterable[tuple[str, int]] = (),
    capacity: int | None = None,
    meta: Mapping[str, object] | None = None,
) -> Instance:
    """Assemble an Instance, deriving the block catalogue and overlap sets.

    With fully dedicated rooms the capacity defaults to
    slots_per_day * rooms * days.
    """
    blocks = enumerate_blocks(days, slots_per_day, lengths, starts)
    if not blocks:
        raise ValueError("no block fits the day: check lengths/starts configuration")
    patients = tuple(p for s in surgeons for p in surgeons[s])
    return Instance(
        days=days,
        rooms=rooms,
        slots_per_day=slots_per_day,
        blocks=tuple(blocks),
        overlap_sets=build_overlap_sets(blocks),
        surgeons=tuple(surgeons.keys()),
        patients=patients,
        unavailability=frozenset(unavailability),
        v_day=v_day,
        v_horizon=v_horizon,
        capacity=capacity if capacity is not None else slots_per_day * rooms * days,
        alpha=Fraction(alpha),
        beta=Fraction(beta),
        lengths=tuple(sorted(set(lengths))),
        starts=tuple(sorted(set(starts))),
        meta=dict(meta or {}),
    )


@dataclass(frozen=True)
class Assignment:
    """A candidate solution: surgeon-block incidences y and patient-block x.

    Stored sparsely as the sets of pairs that equal one. A patient may only
    occupy a block that carries their own surgeon; the feasibility checker
    reports violations of that linkage through the capacity constraint.
    """

    y: frozenset[tuple[str, int]]
    x: frozenset[tuple[str, int]]

    @staticmethod
    def from_pairs(y: Iterable[tuple[str, int]], x: Iterable[tuple[str, int]]) -> "Assignment":
        return Assignment(y=frozenset(y), x=frozenset(x))

    def blocks_of(self, surgeon: str) -> list[int]:
        return sorted(b for (s, b) in self.y if s == surgeon)

    def block_of_patient(self, patient_id: str) -> int | None:
        for (p, b) in self.x:
            if p == patient_id:
                return b
        return None

    def leader_value(self, instance: Instance) -> Fraction:
        return leader_objective(instance, self)

    def follower_value(self, instance: Instance, surgeon: str) -> int:
        return follower_objective(instance, surgeon, self)


EMPTY_ASSIGNMENT = Assignment(y=frozenset(), x=frozenset())


def leader_objective(instance: Instance, assignment: Assignment) -> Fraction:
    """Leader objective F: weighted idle capacity plus priority penalty of
    patients left out of the plan. Exact rational arithmetic."""
    scheduled = {p for (p, _b) in assignment.x}
    used = sum(p.duration for p in instance.patients if p.id in scheduled)
    omitted_prio = sum(p.prio_leader for p in instance.patients if p.id not in scheduled)
    return instance.alpha * (instance.capacity - used) + instance.beta * omitted_prio


def follower_objective(instance: Instance, surgeon: str, assignment: Assignment) -> int:
    """Follower objective f_s: total follower priority of s's scheduled patients."""
    scheduled = {p for (p, _b) in assignment.x}
    return sum(p.prio_follower for p in instance.patients_of(surgeon) if p.id in scheduled)


# Violation tags for the single-level feasibility report.
ROOMS = "ROOMS"
VDAY = "VDAY"
VHOR = "VHOR"
UNAVAIL = "UNAVAIL"
ONCE = "ONCE"
CAP = "CAP"


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[tuple[str, tuple], ...]


def check_single_level_feasibility(instance: Instance, assignment: Assignment) -> FeasibilityReport:
    """Validate every single-level constraint and report all violations.

    Checks, in order: room overlap bound, per-day and horizon block limits,
    unavailability, at-most-once patient scheduling, and block capacity
    (which also catches patients placed in blocks their surgeon does not
    hold, since an unheld block has zero capacity).
    """
    violations: list[tuple[str, tuple]] = []

    for (d, t), block_ids in sorted(instance.overlap_sets.items()):
        active = sum(1 for (s, b) in assignment.y if b in block_ids)
        if active > instance.rooms:
            violations.append((ROOMS, (d, t)))

    for s in instance.surgeons:
        held = assignment.blocks_of(s)
        if len(held) > instance.v_horizon:
            violations.append((VHOR, (s,)))
        per_day: dict[int, int] = {}
        for b in held:
            per_day[instance.block(b).day] = per_day.get(instance.block(b).day, 0) + 1
        for d, n in sorted(per_day.items()):
            if n > instance.v_day:
                violations.append((VDAY, (s, d)))
        for b in held:
            if not instance.available(s, b):
                violations.append((UNAVAIL, (s, b)))

    seen: dict[str, int] = {}
    for (p, _b) in sorted(assignment.x):
        seen[p] = seen.get(p, 0) + 1
    for p, n in sorted(seen.items()):
        if n > 1:
            violations.append((ONCE, (p,)))

    patient_by_id = {p.id: p for p in instance.patients}
    for s in instance.surgeons:
        own = {p.id for p in instance.patients_of(s)}
        held = set(assignment.blocks_of(s))
        for b in sorted({b for (_p, b) in assignment.x} | held):
            load = sum(
                patient_by_id[p].duration for (p, bb) in assignment.x if bb == b and p in own
            )
            cap = instance.block(b).length if b in held else 0
            if load > cap:
                violations.append((CAP, (s, b)))

    return FeasibilityReport(ok=not violations, violations=tuple(violations))
