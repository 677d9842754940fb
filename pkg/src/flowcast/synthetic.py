"""Synthetic event logs with a known attribute-to-next-activity signal.

Each event carries one attribute, ``signal``, drawn from six values.  The
value of the current event fully determines the next activity: five values
route to one of three activities, and the sixth value marks the final event
of the case.  A predictor that sees the attribute (directly or through
cluster labels) can be nearly perfect; one that sees only activity labels
cannot beat the per-prefix-length majority, because the routing values are
drawn independently at every step.
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .eventlog import Case, Event, EventLog

SIGNAL_ATTRIBUTE = "signal"
END_VALUE = "v5"

# Current event's signal value -> activity of the next event.
ROUTING = {
    "v0": "task_a",
    "v1": "task_a",
    "v2": "task_b",
    "v3": "task_b",
    "v4": "task_c",
}

ACTIVITIES = ("task_a", "task_b", "task_c")


def signal_log(
    cases: int = 1000,
    min_length: int = 6,
    max_length: int = 10,
    seed: int = 7,
) -> EventLog:
    """Generate a routing log of ``cases`` cases with ``min_length``..``max_length`` events."""
    if min_length < 2 or max_length < min_length:
        raise ValueError("need 2 <= min_length <= max_length")
    rng = np.random.default_rng(seed)
    routing_values = sorted(ROUTING)
    base = datetime(2021, 1, 1)
    built = []
    for index in range(cases):
        length = int(rng.integers(min_length, max_length + 1))
        case_id = f"case{index:05d}"
        activity = ACTIVITIES[int(rng.integers(len(ACTIVITIES)))]
        events = []
        for step in range(length):
            value = END_VALUE if step == length - 1 else \
                routing_values[int(rng.integers(len(routing_values)))]
            events.append(Event(
                caseid=case_id,
                activity=activity,
                time=base + timedelta(hours=index, minutes=step),
                attrs={SIGNAL_ATTRIBUTE: value},
            ))
            if value != END_VALUE:
                activity = ROUTING[value]
        built.append(Case(id=case_id, events=tuple(events)))
    return EventLog(
        cases=tuple(built),
        attribute_names=frozenset({SIGNAL_ATTRIBUTE}),
    )
