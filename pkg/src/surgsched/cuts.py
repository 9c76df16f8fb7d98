"""Lazy constraints coupling the leader's block choices to follower optima.

Both cut families are stated over block-count indicator variables
q[s, l, w] (surgeon s holds exactly w blocks of length l) rather than raw
block incidences, so one cut kills every timing permutation of the same
block composition at once.

Variable naming convention shared by all model builders:
    ("y", s, b)     block b assigned to surgeon s
    ("x", p, b)     patient p planned in block b
    ("q", s, l, w)  surgeon s holds w blocks of length l
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .domain import Instance
from .optkern import EQ, GE, LE


class CutKind(Enum):
    """Objective-bound cuts force the follower value up to its optimum for
    the block profile; assignment cuts pin the exact optimal patient set."""

    OBJECTIVE = "olc"
    ASSIGNMENT = "alc"


@dataclass(frozen=True)
class BlockCountProfile:
    """Per-length block counts held by one surgeon, over every catalogue
    length (zeros included, so profiles are directly comparable)."""

    counts: tuple[tuple[int, int], ...]  # (length, count), ascending by length

    @staticmethod
    def of(instance: Instance, block_ids: Iterable[int]) -> "BlockCountProfile":
        lengths = instance.block_lengths()
        tally = {l: 0 for l in lengths}
        for b in block_ids:
            tally[instance.block(b).length] += 1
        return BlockCountProfile(counts=tuple((l, tally[l]) for l in lengths))

    def count(self, length: int) -> int:
        for l, n in self.counts:
            if l == length:
                return n
        return 0

    @property
    def total(self) -> int:
        return sum(n for _l, n in self.counts)


def count_domain_max(instance: Instance, length: int) -> int:
    """Largest number of length-l blocks a single surgeon can hold."""
    n_blocks = sum(1 for b in instance.blocks if b.length == length)
    return min(instance.v_horizon, instance.v_day * instance.days, n_blocks)


@dataclass(frozen=True)
class LazyCut:
    """A recorded follower response: the block profile a leader candidate
    gave surgeon s, plus either the optimal follower value (objective kind)
    or the optimal patient set (assignment kind)."""

    kind: CutKind
    surgeon: str
    profile: BlockCountProfile
    pa_set: frozenset[str] | None = None
    f_c: int | None = None
    counter: int = 0

    def __post_init__(self):
        if self.kind is CutKind.OBJECTIVE and self.f_c is None:
            raise ValueError("objective cut needs the optimal follower value")
        if self.kind is CutKind.ASSIGNMENT and self.pa_set is None:
            raise ValueError("assignment cut needs the optimal patient set")

    def key(self):
        payload = self.f_c if self.kind is CutKind.OBJECTIVE else self.pa_set
        return (self.kind, self.surgeon, self.profile, payload)


def build_q_link(instance: Instance, surgeon: str) -> list[tuple[dict, str, int]]:
    """Rows tying q[s, l, w] to the block incidences: the counts must match
    and exactly one count indicator per length is on."""
    rows = []
    for l in instance.block_lengths():
        w_max = count_domain_max(instance, l)
        length_blocks = [b.id for b in instance.blocks if b.length == l]
        link = {("q", surgeon, l, w): w for w in range(w_max + 1)}
        for b in length_blocks:
            link[("y", surgeon, b)] = -1
        rows.append((link, EQ, 0))
        rows.append(({("q", surgeon, l, w): 1 for w in range(w_max + 1)}, EQ, 1))
    return rows


def q_variables(instance: Instance, surgeon: str) -> list[tuple]:
    return [
        ("q", surgeon, l, w)
        for l in instance.block_lengths()
        for w in range(count_domain_max(instance, l) + 1)
    ]


def _activation_terms(instance: Instance, cut: LazyCut, big_m: int) -> tuple[dict, int]:
    """The -M * q terms selecting the cut's profile; returns (coeffs, rhs
    shift) so callers add `rhs_shift` to their right-hand side."""
    coeffs = {}
    n_lengths = 0
    for l, n in cut.profile.counts:
        if not 0 <= n <= count_domain_max(instance, l):
            raise ValueError(f"profile count {n} for length {l} outside the feasible range")
        coeffs[("q", cut.surgeon, l, n)] = -big_m
        n_lengths += 1
    return coeffs, -big_m * n_lengths


def build_olc(instance: Instance, cut: LazyCut, big_m: int) -> tuple[dict, str, int]:
    """Objective cut: whenever the profile is active, the follower total of
    the leader's plan must reach the recorded optimum f_c."""
    if cut.kind is not CutKind.OBJECTIVE:
        raise ValueError("cut is not objective-based")
    coeffs, rhs_shift = _activation_terms(instance, cut, big_m)
    for p in instance.patients_of(cut.surgeon):
        for b in instance.blocks:
            coeffs[("x", p.id, b.id)] = p.prio_follower
    return (coeffs, GE, cut.f_c + rhs_shift)


def build_alc(instance: Instance, cut: LazyCut, big_m: int) -> tuple[dict, str, int]:
    """Assignment cut: whenever the profile is active, exactly the recorded
    patient set must be planned (positive signs inside, negative outside)."""
    if cut.kind is not CutKind.ASSIGNMENT:
        raise ValueError("cut is not assignment-based")
    coeffs, rhs_shift = _activation_terms(instance, cut, big_m)
    for p in instance.patients_of(cut.surgeon):
        sign = 1 if p.id in cut.pa_set else -1
        for b in instance.blocks:
            coeffs[("x", p.id, b.id)] = sign
    return (coeffs, GE, len(cut.pa_set) + rhs_shift)


def build_cut_row(instance: Instance, cut: LazyCut, big_m: int) -> tuple[dict, str, int]:
    if cut.kind is CutKind.OBJECTIVE:
        return build_olc(instance, cut, big_m)
    return build_alc(instance, cut, big_m)


class LazyCutStore:
    """Append-only per-surgeon log of generated cuts, deduplicated.

    Appends are serialized; retrieval returns an immutable snapshot in
    insertion order. A profile may carry only one payload per kind: the
    follower optimum is a function of the profile, so a second, different
    payload would indicate a broken tie-break upstream.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._by_surgeon: dict[str, list[LazyCut]] = {}
        self._keys: set = set()
        self._payload_guard: dict = {}
        self._counter = 0

    def record(self, cut: LazyCut) -> bool:
        """Store a cut; returns False when an identical one already exists."""
        with self._lock:
            key = cut.key()
            if key in self._keys:
                return False
            guard_key = (cut.kind, cut.surgeon, cut.profile)
            payload = cut.f_c if cut.kind is CutKind.OBJECTIVE else cut.pa_set
            if guard_key in self._payload_guard and self._payload_guard[guard_key] != payload:
                raise RuntimeError(
                    f"conflicting cut payloads for {guard_key}: follower tie-break not canonical"
                )
            self._payload_guard[guard_key] = payload
            self._counter += 1
            stored = LazyCut(
                kind=cut.kind,
                surgeon=cut.surgeon,
                profile=cut.profile,
                pa_set=cut.pa_set,
                f_c=cut.f_c,
                counter=self._counter,
            )
            self._keys.add(key)
            self._by_surgeon.setdefault(cut.surgeon, []).append(stored)
            return True

    def retrieve(self, surgeon: str) -> tuple[LazyCut, ...]:
        with self._lock:
            return tuple(self._by_surgeon.get(surgeon, ()))

    def __len__(self) -> int:
        with self._lock:
            return sum(len(v) for v in self._by_surgeon.values())

    def dump(self, fileobj) -> None:
        """One line per cut for debugging: kind, surgeon, profile, payload."""
        with self._lock:
            cuts = [c for lst in self._by_surgeon.values() for c in lst]
        for c in sorted(cuts, key=lambda c: c.counter):
            profile = ",".join(f"{l}:{n}" for l, n in c.profile.counts)
            payload = c.f_c if c.kind is CutKind.OBJECTIVE else sorted(c.pa_set)
            fileobj.write(f"{c.kind.value} surgeon={c.surgeon} profile=[{profile}] payload={payload}\n")
