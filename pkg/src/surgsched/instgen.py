"""Synthetic instance generation and instance (de)serialization.

Surgery durations are drawn from a shifted lognormal, rounded to the
nearest 15-minute slot and clipped, and patients are appended until total
demand lands inside the load-factor window. Patients spread over surgeons
uniformly at random; priorities are i.i.d. discrete-uniform. Generation is
a pure function of the parameter set including the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .domain import Instance, Patient, make_instance


class GenerationError(RuntimeError):
    pass


class InstanceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GenParams:
    surgeons: int
    rooms: int = 1
    days: int = 5
    load_factor: float = 2.0
    lf_tolerance: float = 0.025
    # (shape sigma, scale, shift): duration = shift + scale * exp(sigma * Z)
    duration_dist: tuple[float, float, float] = (0.55, 5.2, 0.5)
    duration_bounds: tuple[int, int] = (1, 30)
    prio_range: tuple[int, int] = (1, 4)
    seed: int = 0
    slots_per_day: int = 32
    lengths: tuple[int, ...] = (8, 16, 24, 32)
    starts: tuple[int, ...] = (0, 8, 16, 24)
    v_day: int = 1
    v_horizon: int | None = None  # defaults to the number of days
    alpha: int = 1
    beta: int = 1
    max_resample_rounds: int = 1000

    def __post_init__(self):
        if self.load_factor <= 0:
            raise ValueError("load_factor must be positive")
        if self.duration_bounds[0] < 1:
            raise ValueError("duration lower bound must be >= 1 slot")


def _draw_duration(rng: np.random.Generator, params: GenParams) -> int:
    sigma, scale, shift = params.duration_dist
    raw = shift + float(rng.lognormal(mean=math.log(scale), sigma=sigma))
    lo, hi = params.duration_bounds
    return int(min(max(round(raw), lo), hi))


def generate_instance(params: GenParams) -> Instance:
    rng = np.random.default_rng(params.seed)
    capacity = params.slots_per_day * params.rooms * params.days
    lo = (params.load_factor - params.lf_tolerance) * capacity
    hi = (params.load_factor + params.lf_tolerance) * capacity

    durations: list[int] = []
    total = 0
    rejects = 0
    while total < lo:
        d = _draw_duration(rng, params)
        if total + d <= hi:
            durations.append(d)
            total += d
            rejects = 0
        else:
            rejects += 1
            if rejects >= params.max_resample_rounds:
                raise GenerationError(
                    f"cannot reach load window [{lo:.1f}, {hi:.1f}] with durations in "
                    f"{params.duration_bounds}"
                )

    surgeon_ids = [f"s{i}" for i in range(params.surgeons)]
    lo_p, hi_p = params.prio_range
    patients_by_surgeon: dict[str, list[Patient]] = {s: [] for s in surgeon_ids}
    for i, dur in enumerate(durations):
        s = surgeon_ids[int(rng.integers(0, params.surgeons))]
        prio_leader = int(rng.integers(lo_p, hi_p + 1))
        prio_follower = int(rng.integers(lo_p, hi_p + 1))
        patients_by_surgeon[s].append(
            Patient(f"p{i}", s, duration=dur, prio_leader=prio_leader, prio_follower=prio_follower)
        )

    return make_instance(
        days=params.days,
        rooms=params.rooms,
        slots_per_day=params.slots_per_day,
        lengths=params.lengths,
        starts=params.starts,
        surgeons=patients_by_surgeon,
        v_day=params.v_day,
        v_horizon=params.v_horizon if params.v_horizon is not None else params.days,
        alpha=params.alpha,
        beta=params.beta,
        meta={"seed": params.seed, "params": asdict(params)},
    )


# -- serialization -----------------------------------------------------------


def _weight_to_json(w: Fraction):
    return int(w) if w.denominator == 1 else float(w)


def save_instance(instance: Instance, path) -> None:
    doc = {
        "meta": dict(instance.meta),
        "horizon": {
            "days": instance.days,
            "rooms": instance.rooms,
            "slots_per_day": instance.slots_per_day,
        },
        "blocks": {"lengths": list(instance.lengths), "starts": list(instance.starts)},
        "limits": {"v_day": instance.v_day, "v_horizon": instance.v_horizon},
        "weights": {
            "alpha": _weight_to_json(instance.alpha),
            "beta": _weight_to_json(instance.beta),
        },
        "unavailability": sorted([s, b] for (s, b) in instance.unavailability),
        "surgeons": [
            {
                "id": s,
                "patients": [
                    {
                        "id": p.id,
                        "duration": p.duration,
                        "prio_leader": p.prio_leader,
                        "prio_follower": p.prio_follower,
                    }
                    for p in instance.patients_of(s)
                ],
            }
            for s in instance.surgeons
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _require(mapping, key, context):
    if key not in mapping:
        raise InstanceFormatError(f"missing field {key!r} in {context}")
    return mapping[key]


def load_instance(path) -> Instance:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e

    horizon = _require(doc, "horizon", "top level")
    blocks = _require(doc, "blocks", "top level")
    limits = _require(doc, "limits", "top level")
    weights = _require(doc, "weights", "top level")
    surgeons_doc = _require(doc, "surgeons", "top level")

    surgeons: dict[str, list[Patient]] = {}
    for entry in surgeons_doc:
        sid = _require(entry, "id", "surgeons[]")
        surgeons[sid] = [
            Patient(
                id=_require(p, "id", f"surgeon {sid} patients[]"),
                surgeon=sid,
                duration=_require(p, "duration", f"patient in surgeon {sid}"),
                prio_leader=_require(p, "prio_leader", f"patient in surgeon {sid}"),
                prio_follower=_require(p, "prio_follower", f"patient in surgeon {sid}"),
            )
            for p in _require(entry, "patients", f"surgeon {sid}")
        ]

    return make_instance(
        days=_require(horizon, "days", "horizon"),
        rooms=_require(horizon, "rooms", "horizon"),
        slots_per_day=_require(horizon, "slots_per_day", "horizon"),
        lengths=_require(blocks, "lengths", "blocks"),
        starts=_require(blocks, "starts", "blocks"),
        surgeons=surgeons,
        v_day=_require(limits, "v_day", "limits"),
        v_horizon=_require(limits, "v_horizon", "limits"),
        alpha=Fraction(str(_require(weights, "alpha", "weights"))),
        beta=Fraction(str(_require(weights, "beta", "weights"))),
        unavailability=[(s, b) for s, b in doc.get("unavailability", [])],
        meta=doc.get("meta", {}),
    )
