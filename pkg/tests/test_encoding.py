import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcast.encoding import (
    FINISHED,
    Encoder,
    FeatureMode,
    NotInUniverse,
    attr_vector,
    bucket_events,
    codify,
    concat,
    onehot,
)

from conftest import (
    TABLE_BOTH_VECTORS,
    make_event,
    make_table_clusters,
    make_table_schema,
)


class TestCodify:
    def test_position_in_universe(self):
        assert codify("b", ["a", "b", "c", "d"]) == 2

    def test_singleton(self):
        assert codify("a", ["a"]) == 1

    def test_unknown_value(self):
        with pytest.raises(NotInUniverse):
            codify("z", ["a", "b"])

    def test_bijection_over_a_fixed_universe(self):
        universe = ["d", "a", "c", "b"]
        indices = [codify(v, universe) for v in universe]
        assert sorted(indices) == [1, 2, 3, 4]


class TestOnehot:
    def test_first_and_last_positions(self):
        assert onehot("a", ["a", "b", "c", "d"]).tolist() == [1, 0, 0, 0]
        assert onehot("d", ["a", "b", "c", "d"]).tolist() == [0, 0, 0, 1]

    def test_unknown_value(self):
        with pytest.raises(NotInUniverse):
            onehot("x", ["a", "b", "c", "d"])


class TestConcat:
    def test_order_preserved(self):
        assert concat([np.array([1, 0]), np.array([0, 1])]).tolist() == [1, 0, 0, 1]

    def test_empty_identity(self):
        assert concat([np.array([]), np.array([1])]).tolist() == [1]
        assert concat([]).tolist() == []

    def test_example_row_composition(self):
        parts = [np.array([1, 0]), np.array([1, 0, 0, 0]), np.array([1, 0])]
        assert concat(parts).tolist() == TABLE_BOTH_VECTORS[0].tolist()


class TestBucketEvents:
    def test_example_buckets(self, table_cases):
        buckets = bucket_events(table_cases)
        assert {a: [e.attrs["food"] for e in evs] for a, evs in buckets.items()} == {
            "eat": ["salad", "pizza", "pizza"],
            "drink": ["water", "soda"],
        }

    def test_single_activity(self):
        cases = bucket_events([])
        assert cases == {}

    def test_every_event_in_exactly_one_bucket(self, table_cases):
        buckets = bucket_events(table_cases)
        total = sum(len(evs) for evs in buckets.values())
        assert total == 5


class TestAttrVector:
    def test_bucket_local_encoding(self):
        event = make_event("c", "eat", 0, food="salad")
        vec = attr_vector(event, ("food",), {"food": ("pizza", "salad")})
        assert vec.tolist() == [0, 1]

    def test_missing_attribute_is_zeros(self):
        event = make_event("c", "eat", 0)
        vec = attr_vector(event, ("food",), {"food": ("pizza", "salad")})
        assert vec.tolist() == [0, 0]

    def test_unseen_value_is_zeros(self):
        event = make_event("c", "eat", 0, food="sushi")
        vec = attr_vector(event, ("food",), {"food": ("pizza", "salad")})
        assert vec.tolist() == [0, 0]

    def test_attribute_iteration_order(self):
        event = make_event("c", "eat", 0, a="x", b="y")
        vocab = {"a": ("x",), "b": ("y", "z")}
        assert attr_vector(event, ("a", "b"), vocab).tolist() == [1, 1, 0]
        assert attr_vector(event, ("b", "a"), vocab).tolist() == [1, 0, 1]


class TestEncoder:
    def test_width_per_mode(self, table_schema, table_clusters):
        widths = {
            FeatureMode("none"): 2,
            FeatureMode("raw"): 6,
            FeatureMode("clust", 2): 4,
            FeatureMode("both", 2): 8,
        }
        for mode, expected in widths.items():
            clusters = table_clusters if mode.uses_clusters else None
            enc = Encoder(schema=table_schema, mode=mode, clusters=clusters)
            assert enc.width == expected, mode.label

    def test_example_vectors_under_both(self, table_events, table_schema, table_clusters):
        enc = Encoder(schema=table_schema, mode=FeatureMode("both", 2),
                      clusters=table_clusters)
        got = np.stack([enc.encode_event(e) for e in table_events])
        assert np.array_equal(got, TABLE_BOTH_VECTORS)

    def test_activity_only_mode(self, table_events, table_schema):
        enc = Encoder(schema=table_schema, mode=FeatureMode("none"))
        assert enc.encode_event(table_events[0]).tolist() == [1, 0]

    def test_cluster_mode(self, table_events, table_schema, table_clusters):
        enc = Encoder(schema=table_schema, mode=FeatureMode("clust", 2),
                      clusters=table_clusters)
        assert enc.encode_event(table_events[0]).tolist() == [1, 0, 1, 0]

    def test_unknown_activity_gives_zero_blocks(self, table_schema, table_clusters):
        enc = Encoder(schema=table_schema, mode=FeatureMode("both", 2),
                      clusters=table_clusters)
        event = make_event("c", "sleep", 0, food="pizza")
        vec = enc.encode_event(event)
        assert vec[:2].tolist() == [0, 0]          # activity block
        assert vec[2:6].tolist() == [0, 1, 0, 0]   # raw block still applies
        assert vec[6:].tolist() == [0, 0]          # cluster block

    def test_clust_mode_requires_model(self, table_schema):
        with pytest.raises(ValueError):
            Encoder(schema=table_schema, mode=FeatureMode("clust", 2))


class TestEncodePrefix:
    def test_target_is_codify_index(self, table_events, table_schema):
        enc = Encoder(schema=table_schema, mode=FeatureMode("none"))
        seq = enc.encode_prefix(table_events[:4], "drink")
        assert seq.target == 1
        assert seq.steps.shape == (4, 2)
        assert seq.prefix_length == 4

    def test_finished_target_is_extra_class(self, table_events, table_schema):
        enc = Encoder(schema=table_schema, mode=FeatureMode("none"))
        seq = enc.encode_prefix(table_events, FINISHED)
        assert seq.target == 2
        assert enc.output_classes == 3

    def test_raw_width_on_prefix(self, table_events, table_schema):
        enc = Encoder(schema=table_schema, mode=FeatureMode("raw"))
        seq = enc.encode_prefix(table_events[:4], "drink")
        assert seq.steps.shape == (4, 6)

    def test_empty_prefix_rejected(self, table_schema):
        enc = Encoder(schema=table_schema, mode=FeatureMode("none"))
        with pytest.raises(ValueError):
            enc.encode_prefix([], "drink")


class TestFeatureMode:
    def test_labels(self):
        assert FeatureMode("none").label == "None"
        assert FeatureMode("raw").label == "Raw"
        assert FeatureMode("clust", 20).label == "Clust20"
        assert FeatureMode("both", 8).label == "Both8"

    def test_parse_round_trip(self):
        for label in ("None", "Raw", "Clust20", "Both8"):
            assert FeatureMode.parse(label).label == label

    def test_parse_rejects_garbage(self):
        for label in ("Clust", "Both", "Clustx", "mystery"):
            with pytest.raises(ValueError):
                FeatureMode.parse(label)

    def test_max_clusters_validation(self):
        with pytest.raises(ValueError):
            FeatureMode("clust")
        with pytest.raises(ValueError):
            FeatureMode("none", 5)


# --- property tests ---------------------------------------------------------

universes = st.lists(
    st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=6),
    min_size=1, max_size=50, unique=True,
)


@given(universes, st.data())
@settings(max_examples=100, deadline=None)
def test_onehot_has_single_one_at_codify_index(universe, data):
    value = data.draw(st.sampled_from(universe))
    vec = onehot(value, universe)
    assert vec.sum() == 1.0
    assert vec[codify(value, universe) - 1] == 1.0


@given(universes)
@settings(max_examples=100, deadline=None)
def test_codify_is_bijective(universe):
    indices = [codify(v, universe) for v in universe]
    assert sorted(indices) == list(range(1, len(universe) + 1))


@given(st.lists(st.sampled_from(["eat", "drink"]), min_size=1, max_size=10),
       st.lists(st.sampled_from(["salad", "pizza", "water", "soda"]),
                min_size=10, max_size=10))
@settings(max_examples=50, deadline=None)
def test_activity_block_sums_to_one_for_known_activities(activities, foods):
    enc = Encoder(schema=make_table_schema(), mode=FeatureMode("both", 2),
                  clusters=make_table_clusters())
    for i, activity in enumerate(activities):
        event = make_event("c", activity, i, food=foods[i])
        vec = enc.encode_event(event)
        assert vec[:2].sum() == 1.0
        assert vec[6:].sum() == 1.0   # cluster block present for known activities
        assert 0.0 <= vec[2:6].sum() <= 1.0


def test_identifiability_same_cluster_label_differs_by_activity(
        table_schema, table_clusters):
    enc = Encoder(schema=table_schema, mode=FeatureMode("clust", 2),
                  clusters=table_clusters)
    eat_salad = enc.encode_event(make_event("c", "eat", 0, food="salad"))
    drink_water = enc.encode_event(make_event("c", "drink", 1, food="water"))
    # both carry cluster label 1 but stay distinguishable via the activity block
    assert eat_salad[2:].tolist() == drink_water[2:].tolist() == [1, 0]
    assert not np.array_equal(eat_salad, drink_water)


def test_encoding_is_deterministic(table_events, table_schema, table_clusters):
    enc = Encoder(schema=table_schema, mode=FeatureMode("both", 2),
                  clusters=table_clusters)
    first = np.stack([enc.encode_event(e) for e in table_events])
    second = np.stack([enc.encode_event(e) for e in table_events])
    assert np.array_equal(first, second)
