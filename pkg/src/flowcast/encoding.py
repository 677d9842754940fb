"""Feature encoding: one-hot primitives, feature modes, and input vectors.

Every event becomes a fixed-width {0,1} vector: an activity block followed,
depending on the feature mode, by a raw attribute-value block and/or a
cluster-label block.  Prefixes of a case become matrices of such vectors
paired with a target class (the next activity, or the finished class when
the prefix is the whole case).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .eventlog import AttributeSchema, Case, Event

if TYPE_CHECKING:
    from .clustering import ClusterModel

# Target marker for a prefix that covers its whole case.  This is an extra
# output class, never an input feature.
FINISHED = "__finished__"

_MODE_KINDS = ("none", "clust", "raw", "both")


class NotInUniverse(LookupError):
    """A value was encoded against a universe that does not contain it."""


@dataclass(frozen=True)
class FeatureMode:
    """Which event-attribute information enters the input vector.

    ``kind`` is one of ``none`` (activity only), ``clust`` (cluster labels),
    ``raw`` (plain one-hot attribute values) or ``both``.  ``max_clusters``
    caps the per-activity cluster search for the cluster-based kinds.
    """

    kind: str
    max_clusters: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _MODE_KINDS:
            raise ValueError(f"unknown feature mode kind {self.kind!r}")
        if self.uses_clusters:
            if self.max_clusters is None or self.max_clusters < 1:
                raise ValueError(f"{self.kind!r} mode needs max_clusters >= 1")
        elif self.max_clusters is not None:
            raise ValueError(f"{self.kind!r} mode takes no max_clusters")

    @property
    def uses_clusters(self) -> bool:
        return self.kind in ("clust", "both")

    @property
    def uses_raw(self) -> bool:
        return self.kind in ("raw", "both")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "None"
        if self.kind == "raw":
            return "Raw"
        prefix = "Clust" if self.kind == "clust" else "Both"
        return f"{prefix}{self.max_clusters}"

    @classmethod
    def parse(cls, label: str) -> "FeatureMode":
        """Parse a mode label such as ``None``, ``Raw``, ``Clust20``, ``Both8``."""
        bare = label.strip()
        lowered = bare.lower()
        if lowered == "none":
            return cls("none")
        if lowered == "raw":
            return cls("raw")
        for prefix in ("clust", "both"):
            if lowered.startswith(prefix):
                digits = bare[len(prefix):]
                if not digits.isdigit():
                    raise ValueError(f"mode {label!r} needs a cluster count, e.g. {prefix.title()}20")
                return cls(prefix, int(digits))
        raise ValueError(f"unknown feature mode label {label!r}")


@dataclass(frozen=True)
class EncodedSequence:
    """One prefix, encoded: a T x D step matrix and its target class index."""

    steps: np.ndarray
    target: int
    case_id: str
    prefix_length: int


def codify(value: str, universe: Sequence[str]) -> int:
    """Map ``value`` to its 1-based index in the ordered ``universe``."""
    index = {v: i for i, v in enumerate(universe)}.get(value)
    if index is None:
        raise NotInUniverse(f"value {value!r} is not in the universe")
    return index + 1


def onehot(value: str, universe: Sequence[str]) -> np.ndarray:
    """One-hot encode ``value`` against ``universe``: a single 1 at the codify index."""
    vec = np.zeros(len(universe))
    vec[codify(value, universe) - 1] = 1.0
    return vec


def concat(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate numeric vectors in order; the empty list yields an empty vector."""
    if not vectors:
        return np.zeros(0)
    return np.concatenate([np.asarray(v, dtype=float) for v in vectors])


def bucket_events(training_cases: Sequence[Case]) -> dict[str, list[Event]]:
    """Group all training events by their activity label."""
    buckets: dict[str, list[Event]] = {}
    for case in training_cases:
        for event in case.events:
            buckets.setdefault(event.activity, []).append(event)
    return buckets


def attr_vector(
    event: Event,
    attributes: Sequence[str],
    vocab: Mapping[str, Sequence[str]],
) -> np.ndarray:
    """Concatenated per-attribute one-hot encoding of an event's attribute values.

    Attributes are iterated in the given order; a missing attribute or a
    value absent from ``vocab`` contributes an all-zero sub-vector instead
    of failing, so unseen test-time values are silently ignored.
    """
    parts = []
    for name in attributes:
        universe = vocab[name]
        block = np.zeros(len(universe))
        value = event.attrs.get(name)
        if value is not None:
            for i, known in enumerate(universe):
                if known == value:
                    block[i] = 1.0
                    break
        parts.append(block)
    return concat(parts)


@dataclass(frozen=True)
class Encoder:
    """Turns events and prefixes into fixed-width input vectors.

    The vector layout is: activity block, then (for raw/both) one block per
    attribute over the schema's global vocabulary, then (for clust/both) a
    cluster-label block of width ``clusters.label_count``.  Immutable after
    construction; encoding is pure.
    """

    schema: AttributeSchema
    mode: FeatureMode
    clusters: "ClusterModel | None" = None
    _act_index: dict = field(init=False, repr=False)
    _raw_blocks: tuple = field(init=False, repr=False)
    _cluster_offset: int = field(init=False, repr=False)
    width: int = field(init=False)

    def __post_init__(self) -> None:
        if self.mode.uses_clusters and self.clusters is None:
            raise ValueError(f"mode {self.mode.label} requires a trained ClusterModel")
        object.__setattr__(self, "_act_index",
                           {a: i for i, a in enumerate(self.schema.activities)})
        offset = len(self.schema.activities)
        raw_blocks = []
        if self.mode.uses_raw:
            for name in self.schema.attributes:
                universe = self.schema.vocab[name]
                raw_blocks.append((name, offset, {v: i for i, v in enumerate(universe)}))
                offset += len(universe)
        object.__setattr__(self, "_raw_blocks", tuple(raw_blocks))
        object.__setattr__(self, "_cluster_offset", offset)
        if self.mode.uses_clusters:
            offset += self.clusters.label_count
        object.__setattr__(self, "width", offset)

    def encode_event(self, event: Event) -> np.ndarray:
        vec = np.zeros(self.width)
        act = self._act_index.get(event.activity)
        if act is not None:
            vec[act] = 1.0
        for name, offset, index in self._raw_blocks:
            value = event.attrs.get(name)
            if value is not None:
                i = index.get(value)
                if i is not None:
                    vec[offset + i] = 1.0
        if self.mode.uses_clusters:
            # An activity never seen in training has no clustering; its
            # cluster block stays zero, mirroring the activity block.
            if event.activity in self.clusters.per_activity:
                label = self.clusters.assign(event)
                vec[self._cluster_offset + label - 1] = 1.0
        return vec

    def encode_steps(self, prefix: Sequence[Event]) -> np.ndarray:
        if not prefix:
            raise ValueError("cannot encode an empty prefix")
        return np.stack([self.encode_event(e) for e in prefix])

    def encode_prefix(self, prefix: Sequence[Event], target_activity: str) -> EncodedSequence:
        steps = self.encode_steps(prefix)
        if target_activity == FINISHED:
            target = len(self.schema.activities)
        else:
            target = codify(target_activity, self.schema.activities) - 1
        return EncodedSequence(
            steps=steps,
            target=target,
            case_id=prefix[0].caseid,
            prefix_length=len(prefix),
        )

    @property
    def output_classes(self) -> int:
        # One class per training activity plus the finished class.
        return len(self.schema.activities) + 1
