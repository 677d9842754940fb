"""Binary persistence for trained models.

A bundle is a single file: an 8-byte magic, a length-prefixed JSON header
(schema, feature mode, clustering structure, network dims, metadata, and
the tensor directory), the tensor payloads as length-prefixed row-major
little-endian float64 blocks, and a trailing CRC32 over everything before
the footer.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .clustering import BucketClustering, ClusterModel
from .encoding import Encoder, FeatureMode
from .eventlog import AttributeSchema
from .neuralnet import PARAM_NAMES, GruNetwork

MAGIC = b"FLOWCAST"
FORMAT_VERSION = 1


class BundleError(ValueError):
    """The model file is unreadable, corrupted, or internally inconsistent."""


@dataclass
class ModelBundle:
    """A trained model: schema, feature mode, optional clusterings, network."""

    schema: AttributeSchema
    mode: FeatureMode
    clusters: ClusterModel | None
    network: GruNetwork
    metadata: dict = field(default_factory=dict)

    def encoder(self) -> Encoder:
        return Encoder(schema=self.schema, mode=self.mode, clusters=self.clusters)

    def check_consistent(self) -> None:
        encoder = self.encoder()
        if encoder.width != self.network.input_dim:
            raise BundleError(
                f"encoder width {encoder.width} does not match "
                f"network input dimension {self.network.input_dim}"
            )
        if encoder.output_classes != self.network.output_dim:
            raise BundleError(
                f"schema implies {encoder.output_classes} output classes but "
                f"the network has {self.network.output_dim}"
            )


def _header_dict(bundle: ModelBundle, tensors: list[tuple[str, np.ndarray]]) -> dict:
    clusters = None
    if bundle.clusters is not None:
        activity_order = sorted(bundle.clusters.per_activity)
        clusters = {
            "max_clusters": bundle.clusters.max_clusters,
            "label_count": bundle.clusters.label_count,
            "attributes": list(bundle.clusters.attributes),
            "activity_order": activity_order,
            "buckets": {
                activity: {
                    "k": bundle.clusters.per_activity[activity].k,
                    "bucket_vocab": {
                        name: list(values)
                        for name, values in bundle.clusters.per_activity[activity].bucket_vocab.items()
                    },
                }
                for activity in activity_order
            },
        }
    return {
        "version": FORMAT_VERSION,
        "schema": {
            "activities": list(bundle.schema.activities),
            "attributes": list(bundle.schema.attributes),
            "vocab": {name: list(values) for name, values in bundle.schema.vocab.items()},
        },
        "mode": {"kind": bundle.mode.kind, "max_clusters": bundle.mode.max_clusters},
        "clusters": clusters,
        "network": {
            "input_dim": bundle.network.input_dim,
            "hidden_dim": bundle.network.hidden_dim,
            "output_dim": bundle.network.output_dim,
        },
        "metadata": bundle.metadata,
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
    }


def _collect_tensors(bundle: ModelBundle) -> list[tuple[str, np.ndarray]]:
    tensors = [(f"net.{name}", bundle.network.params[name]) for name in PARAM_NAMES]
    if bundle.clusters is not None:
        for i, activity in enumerate(sorted(bundle.clusters.per_activity)):
            centroids = bundle.clusters.per_activity[activity].centroids
            tensors.append((f"centroids.{i}", centroids))
    return tensors


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    bundle.check_consistent()
    tensors = _collect_tensors(bundle)
    header = json.dumps(_header_dict(bundle, tensors), sort_keys=True).encode("utf-8")

    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<I", len(header)))
    body.write(header)
    for _, arr in tensors:
        payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        body.write(struct.pack("<Q", len(payload)))
        body.write(payload)
    raw = body.getvalue()
    with open(path, "wb") as sink:
        sink.write(raw)
        sink.write(struct.pack("<I", zlib.crc32(raw)))


def _read_exact(stream: IO[bytes], count: int, what: str) -> bytes:
    data = stream.read(count)
    if len(data) != count:
        raise BundleError(f"truncated model file while reading {what}")
    return data


def load_bundle(path: str | Path) -> ModelBundle:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or not raw.startswith(MAGIC):
        raise BundleError("not a model bundle (bad magic)")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise BundleError("checksum mismatch: model file is corrupted")

    stream = io.BytesIO(raw[:-4])
    _read_exact(stream, len(MAGIC), "magic")
    header_len = struct.unpack("<I", _read_exact(stream, 4, "header length"))[0]
    try:
        header = json.loads(_read_exact(stream, header_len, "header"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"unreadable bundle header: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle version {header.get('version')!r}")

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        length = struct.unpack("<Q", _read_exact(stream, 8, "tensor length"))[0]
        payload = _read_exact(stream, length, f"tensor {entry['name']}")
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(payload, dtype="<f8")
        if flat.size != expected:
            raise BundleError(f"tensor {entry['name']} has wrong size")
        arrays[entry["name"]] = flat.reshape(shape).astype(float)

    schema = AttributeSchema(
        activities=tuple(header["schema"]["activities"]),
        attributes=tuple(header["schema"]["attributes"]),
        vocab={name: tuple(values) for name, values in header["schema"]["vocab"].items()},
    )
    mode = FeatureMode(header["mode"]["kind"], header["mode"]["max_clusters"])

    clusters = None
    if header.get("clusters"):
        info = header["clusters"]
        per_activity = {}
        for i, activity in enumerate(info["activity_order"]):
            bucket = info["buckets"][activity]
            per_activity[activity] = BucketClustering(
                activity=activity,
                bucket_vocab={name: tuple(values)
                              for name, values in bucket["bucket_vocab"].items()},
                centroids=arrays[f"centroids.{i}"],
                k=bucket["k"],
            )
        clusters = ClusterModel(
            per_activity=per_activity,
            attributes=tuple(info["attributes"]),
            max_clusters=info["max_clusters"],
            label_count=info["label_count"],
        )

    dims = header["network"]
    network = GruNetwork(
        input_dim=dims["input_dim"],
        hidden_dim=dims["hidden_dim"],
        output_dim=dims["output_dim"],
        params={name: arrays[f"net.{name}"] for name in PARAM_NAMES},
    )
    bundle = ModelBundle(
        schema=schema,
        mode=mode,
        clusters=clusters,
        network=network,
        metadata=header.get("metadata", {}),
    )
    bundle.check_consistent()
    return bundle
