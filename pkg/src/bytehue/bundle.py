"""Portable trained-model bundles with integrity checking.

File layout: 8-byte magic "BYTEHUE1", 8-byte little-endian length of a JSON
metadata block (configs, vocabulary, encoding, tensor shapes, checksum),
then the raw little-endian float64 weight blobs in metadata order. The
SHA-256 checksum covers the canonical metadata (minus the checksum field
itself) plus every weight byte, so any single-byte corruption is caught at
load time.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .encoder import EncodingConfig
from .errors import ChecksumMismatchError, MagicMismatchError, ShapeMismatchError
from .ingest import LabelVocabulary
from .nn import NetworkConfig, Parameters
from .training import TrainedModel

MAGIC = b"BYTEHUE1"


@dataclass(frozen=True)
class ModelBundle:
    binary_net: NetworkConfig
    binary_params: Parameters
    multilabel_net: NetworkConfig
    multilabel_params: Parameters
    vocabulary: LabelVocabulary
    encoding: EncodingConfig
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    def __post_init__(self):
        if len(self.vocabulary) != self.multilabel_net.head[1]:
            raise ShapeMismatchError(
                "vocabulary length does not match multilabel head arity"
            )

    def binary_model(self) -> TrainedModel:
        return TrainedModel(self.binary_net, self.binary_params, self.encoding.hash())

    def multilabel_model(self) -> TrainedModel:
        return TrainedModel(
            self.multilabel_net, self.multilabel_params, self.encoding.hash()
        )

    def version(self) -> str:
        return self.content_checksum()[:16]

    def _tensor_entries(self):
        for stage, params in (("binary", self.binary_params),
                              ("multilabel", self.multilabel_params)):
            for i, tens in params.tensors.items():
                for key in sorted(tens):
                    yield stage, i, key, tens[key]

    def _metadata(self) -> dict:
        return {
            "binary_net": self.binary_net.to_json_dict(),
            "multilabel_net": self.multilabel_net.to_json_dict(),
            "vocabulary": {
                "names": list(self.vocabulary.names),
                "version": self.vocabulary.version,
            },
            "encoding": self.encoding.to_json_dict(),
            "created_at": self.created_at.isoformat(),
            "tensors": [
                {"stage": s, "layer": i, "key": k, "shape": list(t.shape)}
                for s, i, k, t in self._tensor_entries()
            ],
        }

    def content_checksum(self) -> str:
        meta = json.dumps(self._metadata(), sort_keys=True, separators=(",", ":"))
        h = hashlib.sha256(meta.encode())
        for _, _, _, t in self._tensor_entries():
            h.update(np.ascontiguousarray(t, dtype="<f8").tobytes())
        return h.hexdigest()


def save_bundle(bundle: ModelBundle, path: str | os.PathLike) -> None:
    meta = bundle._metadata()
    meta["checksum"] = bundle.content_checksum()
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        for _, _, _, t in bundle._tensor_entries():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_bundle(path: str | os.PathLike) -> ModelBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise MagicMismatchError("not a bytehue bundle file")
    (meta_len,) = struct.unpack("<Q", blob[8:16])
    meta_end = 16 + meta_len
    if len(blob) < meta_end:
        raise MagicMismatchError("truncated metadata block")
    try:
        meta = json.loads(blob[16:meta_end])
    except ValueError as exc:  # invalid JSON or invalid UTF-8
        raise ChecksumMismatchError(f"metadata is not valid JSON: {exc}") from exc

    # verify integrity over the raw bytes before building any typed objects
    try:
        stored_checksum = meta.pop("checksum")
        canon = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        h = hashlib.sha256(canon)
        h.update(blob[meta_end:])
        expected_blob_len = sum(
            int(np.prod(e["shape"])) * 8 for e in meta["tensors"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ChecksumMismatchError(f"malformed metadata: {exc}") from exc
    if len(blob) - meta_end != expected_blob_len:
        raise ChecksumMismatchError("weight payload length does not match metadata")
    if h.hexdigest() != stored_checksum:
        raise ChecksumMismatchError("bundle checksum verification failed")

    offset = meta_end
    tensors: dict[str, dict[int, dict[str, np.ndarray]]] = {"binary": {}, "multilabel": {}}
    for entry in meta["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        arr = np.frombuffer(blob[offset : offset + nbytes], dtype="<f8").reshape(shape)
        offset += nbytes
        tensors[entry["stage"]].setdefault(entry["layer"], {})[entry["key"]] = arr.copy()

    bundle = ModelBundle(
        binary_net=NetworkConfig.from_json_dict(meta["binary_net"]),
        binary_params=Parameters(tensors["binary"]),
        multilabel_net=NetworkConfig.from_json_dict(meta["multilabel_net"]),
        multilabel_params=Parameters(tensors["multilabel"]),
        vocabulary=LabelVocabulary(
            tuple(meta["vocabulary"]["names"]), meta["vocabulary"]["version"]
        ),
        encoding=EncodingConfig.from_json_dict(meta["encoding"]),
        created_at=datetime.fromisoformat(meta["created_at"]),
    )
    _verify_shapes(bundle)
    return bundle


def _verify_shapes(bundle: ModelBundle) -> None:
    from .nn import parameter_shapes

    for net, params in (
        (bundle.binary_net, bundle.binary_params),
        (bundle.multilabel_net, bundle.multilabel_params),
    ):
        expected = parameter_shapes(net)
        for i, shapes in expected.items():
            got = params.tensors.get(i)
            if got is None:
                raise ShapeMismatchError(f"missing tensors for layer {i}")
            for k, shp in shapes.items():
                if tuple(got[k].shape) != shp:
                    raise ShapeMismatchError(
                        f"layer {i}/{k}: expected shape {shp}, got {got[k].shape}"
                    )
