"""Per-activity clustering of one-hot encoded event attributes.

Each activity gets its own clustering: the attribute values of its training
events are one-hot encoded against bucket-local vocabularies and clustered
with an x-means-style search (k-means splits accepted when they improve a
BIC score), capped at a configurable maximum cluster count.  The resulting
cluster labels form a compact, shared 1..label_count space used by the
cluster block of the input vector.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoding import attr_vector, bucket_events
from .eventlog import AttributeSchema, Case, Event

_KMEANS_MAX_ITER = 100
_VARIANCE_FLOOR = 1e-9


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _sse(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # Remaining mass is zero: every point coincides with a chosen
            # centroid.  Callers reduce k below the distinct-point count, so
            # this only happens through floating-point underflow.
            centroids[i] = points[rng.integers(n)]
        else:
            pick = int(rng.choice(n, p=closest / total))
            centroids[i] = points[pick]
        closest = np.minimum(closest, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    trace: list[float],
) -> tuple[np.ndarray, np.ndarray]:
    centroids = _plusplus_init(points, k, rng)
    labels: np.ndarray | None = None
    for _ in range(_KMEANS_MAX_ITER):
        distances = _squared_distances(points, centroids)
        new_labels = distances.argmin(axis=1)
        for empty in range(k):
            if not np.any(new_labels == empty):
                worst = int(distances[np.arange(len(points)), new_labels].argmax())
                new_labels[worst] = empty
        trace.append(_sse(points, centroids, new_labels))
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for i in range(k):
            centroids[i] = points[labels == i].mean(axis=0)
    else:
        # Iteration cap: re-assign once so labels match the returned centroids.
        labels = _squared_distances(points, centroids).argmin(axis=1)
    return centroids, labels


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int | np.random.Generator,
    n_init: int = 10,
    sse_trace: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's k-means with k-means++ initialisation and restarts.

    Runs ``n_init`` restarts and keeps the one with the lowest SSE.
    Returns ``(centroids, labels)`` with 0-based labels assigning each point
    to its nearest centroid (Euclidean, ties to the lowest index).  ``k`` is
    silently reduced to the number of distinct points.  Empty clusters are
    reseeded to the point farthest from its current centroid.  If
    ``sse_trace`` is a list, the per-iteration SSE of the winning restart is
    appended to it.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    distinct = np.unique(points, axis=0).shape[0]
    k = min(k, distinct)

    best: tuple[float, np.ndarray, np.ndarray, list[float]] | None = None
    for _ in range(n_init):
        trace: list[float] = []
        centroids, labels = _lloyd(points, k, rng, trace)
        sse = _sse(points, centroids, labels)
        if best is None or sse < best[0]:
            best = (sse, centroids, labels, trace)
    _, centroids, labels, trace = best
    if sse_trace is not None:
        sse_trace.extend(trace)
    return centroids, labels


def _bic(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Pelleg-Moore style BIC under a shared spherical-Gaussian model (maximise)."""
    n, dims = points.shape
    k = centroids.shape[0]
    sse = _sse(points, centroids, labels)
    variance = sse / (n - k) if n > k else _VARIANCE_FLOOR
    variance = max(variance, _VARIANCE_FLOOR)
    sizes = np.bincount(labels, minlength=k).astype(float)
    sizes = sizes[sizes > 0]
    log_likelihood = (
        float((sizes * np.log(sizes / n)).sum())
        - 0.5 * n * dims * np.log(2.0 * np.pi * variance)
        - 0.5 * (n - k)
    )
    free_params = k * (dims + 1)
    return log_likelihood - 0.5 * free_params * np.log(n)


def _split_gain(
    points: np.ndarray, indices: np.ndarray, rng: np.random.Generator,
) -> tuple[float, np.ndarray | None]:
    """BIC improvement of the best 2-means split of one cluster."""
    members = points[indices]
    if indices.shape[0] < 2 or np.unique(members, axis=0).shape[0] < 2:
        return -np.inf, None
    child_centroids, child_labels = kmeans(members, 2, rng)
    if child_centroids.shape[0] != 2:
        return -np.inf, None
    parent = members.mean(axis=0, keepdims=True)
    zeros = np.zeros(indices.shape[0], dtype=np.intp)
    gain = _bic(members, child_centroids, child_labels) - _bic(members, parent, zeros)
    return gain, child_labels


def xmeans(
    points: np.ndarray,
    max_k: int,
    seed: int | np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Search for a cluster count in [1, max_k] by BIC-scored 2-means splits.

    Starts from a single cluster and repeatedly 2-means-splits the current
    cluster whose split improves the BIC of its region the most, until no
    split improves the BIC or the cap is reached.  Applying the largest
    improvement first keeps dominant groups from being starved of the cap
    by small peripheral splits.  Returns ``(centroids, labels)`` with
    1-based labels.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-D array")
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    rng = np.random.default_rng(seed)

    clusters = [np.arange(points.shape[0])]
    splits: list[tuple[float, np.ndarray | None] | None] = [None]
    while len(clusters) < max_k:
        for i, pending in enumerate(splits):
            if pending is None:
                splits[i] = _split_gain(points, clusters[i], rng)
        best = max(range(len(clusters)), key=lambda i: splits[i][0])
        gain, child_labels = splits[best]
        if gain <= 0.0:
            break
        indices = clusters[best]
        clusters[best] = indices[child_labels == 0]
        splits[best] = None
        clusters.append(indices[child_labels == 1])
        splits.append(None)

    centroids = np.stack([points[idx].mean(axis=0) for idx in clusters])
    labels = np.empty(points.shape[0], dtype=np.intp)
    for i, idx in enumerate(clusters):
        labels[idx] = i + 1
    return centroids, labels


@dataclass(frozen=True)
class BucketClustering:
    """Clustering of one activity's training events in its own vocabulary space."""

    activity: str
    bucket_vocab: Mapping[str, tuple[str, ...]]
    centroids: np.ndarray
    k: int


@dataclass(frozen=True)
class ClusterModel:
    """All per-activity clusterings plus the shared label space size.

    ``label_count`` is the maximum cluster count any single activity
    actually produced; labels from every bucket share the 1..label_count
    space, so identifying the concrete cluster requires the activity label
    as well.
    """

    per_activity: Mapping[str, BucketClustering]
    attributes: tuple[str, ...]
    max_clusters: int
    label_count: int

    def assign(self, event: Event) -> int:
        """Label of the centroid nearest to the event, in 1..label_count.

        The event is vectorised with the training bucket vocabulary of its
        activity; unknown values contribute zero sub-vectors.  The event's
        activity must have a clustering (callers encode zeros otherwise).
        """
        bucket = self.per_activity[event.activity]
        if bucket.centroids.shape[1] == 0:
            return 1
        vec = attr_vector(event, self.attributes, bucket.bucket_vocab)
        distances = ((bucket.centroids - vec) ** 2).sum(axis=1)
        return int(distances.argmin()) + 1


def _bucket_seed(seed: int, activity: str) -> np.random.Generator:
    # Seeded per activity so buckets cluster independently of one another
    # and of the order activities appear in the log.
    return np.random.default_rng([seed, zlib.crc32(activity.encode("utf-8"))])


def _cluster_bucket(
    activity: str,
    events: Sequence[Event],
    attributes: tuple[str, ...],
    max_clusters: int,
    seed: int,
) -> BucketClustering:
    vocab = {
        name: tuple(sorted({e.attrs[name] for e in events if name in e.attrs}))
        for name in attributes
    }
    dims = sum(len(v) for v in vocab.values())
    if dims == 0:
        return BucketClustering(activity=activity, bucket_vocab=vocab,
                                centroids=np.zeros((1, 0)), k=1)
    points = np.stack([attr_vector(e, attributes, vocab) for e in events])
    centroids, _ = xmeans(points, max_clusters, _bucket_seed(seed, activity))
    return BucketClustering(activity=activity, bucket_vocab=vocab,
                            centroids=centroids, k=centroids.shape[0])


def worker_count() -> int:
    """Worker cap from the FLOWCAST_THREADS environment variable (default 1)."""
    raw = os.environ.get("FLOWCAST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def fit(
    training_cases: Sequence[Case],
    schema: AttributeSchema,
    max_clusters: int,
    seed: int,
    workers: int | None = None,
) -> ClusterModel:
    """Cluster every activity bucket of the training cases.

    Each bucket gets vocabularies restricted to its own events, is
    vectorised with :func:`attr_vector`, and clustered with
    :func:`xmeans` capped at ``max_clusters``.  Buckets with no attribute
    values at all collapse to a single empty-centroid cluster.  Buckets are
    independent, so they may be clustered in parallel (``workers`` defaults
    to FLOWCAST_THREADS); per-activity seeding keeps the result identical
    either way.
    """
    if max_clusters < 1:
        raise ValueError("max_clusters must be >= 1")
    buckets = bucket_events(training_cases)
    activities = sorted(buckets)
    if workers is None:
        workers = worker_count()

    def build(activity: str) -> BucketClustering:
        return _cluster_bucket(activity, buckets[activity], schema.attributes,
                               max_clusters, seed)

    if workers > 1 and len(activities) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build, activities))
    else:
        results = [build(activity) for activity in activities]
    per_activity = {bc.activity: bc for bc in results}
    label_count = max((bc.k for bc in per_activity.values()), default=1)
    return ClusterModel(
        per_activity=per_activity,
        attributes=schema.attributes,
        max_clusters=max_clusters,
        label_count=label_count,
    )
