import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surgsched.domain import Patient, make_instance


@pytest.fixture(scope="session")
def t1():
    """Canonical two-surgeon, one-day instance used across the suite."""
    return make_instance(
        days=1,
        rooms=1,
        slots_per_day=32,
        lengths=[8, 16, 24, 32],
        starts=[0, 8, 16, 24],
        v_day=1,
        v_horizon=1,
        alpha=1,
        beta=1,
        surgeons={
            "s0": [
                Patient("p0", "s0", duration=10, prio_leader=2, prio_follower=1),
                Patient("p1", "s0", duration=6, prio_leader=1, prio_follower=3),
            ],
            "s1": [
                Patient("p2", "s1", duration=14, prio_leader=3, prio_follower=2),
            ],
        },
    )


@pytest.fixture(scope="session")
def t2():
    """Single surgeon whose priorities conflict with the leader's."""
    return make_instance(
        days=1,
        rooms=1,
        slots_per_day=32,
        lengths=[8, 16, 24, 32],
        starts=[0, 8, 16, 24],
        v_day=1,
        v_horizon=1,
        alpha=1,
        beta=1,
        surgeons={
            "s0": [
                Patient("p0", "s0", duration=12, prio_leader=4, prio_follower=1),
                Patient("p1", "s0", duration=10, prio_leader=1, prio_follower=3),
            ],
        },
    )


@pytest.fixture(scope="session")
def t3_conflict():
    """One block size only, two same-size patients with opposed priorities:
    the leader relaxation can pretend the follower schedules the leader's
    favourite, so the decomposed root bound is strictly tighter here."""
    return make_instance(
        days=1,
        rooms=1,
        slots_per_day=32,
        lengths=[16],
        starts=[0],
        v_day=1,
        v_horizon=1,
        alpha=1,
        beta=1,
        surgeons={
            "s0": [
                Patient("p0", "s0", duration=16, prio_leader=4, prio_follower=1),
                Patient("p1", "s0", duration=16, prio_leader=1, prio_follower=3),
            ],
        },
    )
