"""Shared fixtures: the two-activity example log and its stub clustering.

The example log mirrors the worked feature-vector example: five events over
activities eat/drink with one attribute ``food``, a fixed vector layout of
width 8 under the Both mode, and a hand-set two-cluster assignment per
activity.
"""

from datetime import datetime, timedelta

import numpy as np
import pytest

from flowcast.clustering import BucketClustering, ClusterModel
from flowcast.eventlog import AttributeSchema, Case, Event


def make_event(caseid, activity, minute, **attrs):
    return Event(
        caseid=caseid,
        activity=activity,
        time=datetime(2020, 1, 1) + timedelta(minutes=minute),
        attrs=attrs,
    )


@pytest.fixture
def table_events():
    return [
        make_event("c1", "eat", 0, food="salad"),
        make_event("c1", "drink", 1, food="water"),
        make_event("c1", "eat", 2, food="pizza"),
        make_event("c1", "eat", 3, food="pizza"),
        make_event("c1", "drink", 4, food="soda"),
    ]


@pytest.fixture
def table_cases(table_events):
    return [Case(id="c1", events=tuple(table_events))]


def make_table_schema():
    # Orders taken from the worked example rather than lexicographic ones;
    # the encoder works with whatever ordering the schema fixes.
    return AttributeSchema(
        activities=("eat", "drink"),
        attributes=("food",),
        vocab={"food": ("salad", "pizza", "water", "soda")},
    )


def make_table_clusters():
    # Hand-set assignment: eat: salad -> 1, pizza -> 2; drink: water -> 1,
    # soda -> 2.  Centroids sit exactly on the one-hot corners.
    return ClusterModel(
        per_activity={
            "eat": BucketClustering(
                activity="eat",
                bucket_vocab={"food": ("salad", "pizza")},
                centroids=np.array([[1.0, 0.0], [0.0, 1.0]]),
                k=2,
            ),
            "drink": BucketClustering(
                activity="drink",
                bucket_vocab={"food": ("water", "soda")},
                centroids=np.array([[1.0, 0.0], [0.0, 1.0]]),
                k=2,
            ),
        },
        attributes=("food",),
        max_clusters=2,
        label_count=2,
    )


@pytest.fixture
def table_schema():
    return make_table_schema()


@pytest.fixture
def table_clusters():
    return make_table_clusters()


TABLE_BOTH_VECTORS = np.array([
    [1, 0, 1, 0, 0, 0, 1, 0],
    [0, 1, 0, 0, 1, 0, 1, 0],
    [1, 0, 0, 1, 0, 0, 0, 1],
    [1, 0, 0, 1, 0, 0, 0, 1],
    [0, 1, 0, 0, 0, 1, 0, 1],
], dtype=float)
