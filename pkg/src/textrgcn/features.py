"""Node feature assembly and the NFF1 feature-file format.

NFF1 is a little-endian binary format: magic ``NFF1``, u32 record count,
u32 dimension, then per record a u16 key byte-length, the UTF-8 key
(prefixed ``doc:`` or ``word:``), and ``dimension`` float32 values. It is
the sole contract between this package and external feature exporters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyPool,
    MissingKey,
    NonFiniteInput,
    TruncatedRecord,
)
from .graph import HeteroTextGraph

MAGIC = b"NFF1"
_HEADER = struct.Struct("<II")
_KEYLEN = struct.Struct("<H")


@dataclass
class FeatureFile:
    """Parsed key -> float32 vector map with its declared dimension."""

    dimension: int
    vectors: dict[str, np.ndarray]


def load_feature_file(path) -> FeatureFile:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagic(f"{path}: expected magic {MAGIC!r}, found {magic!r}")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise TruncatedRecord(f"{path}: truncated header")
        count, dim = _HEADER.unpack(header)
        vectors: dict[str, np.ndarray] = {}
        vec_bytes = 4 * dim
        for r in range(count):
            lead = fh.read(_KEYLEN.size)
            if len(lead) != _KEYLEN.size:
                raise TruncatedRecord(f"{path}: record {r}: truncated key length")
            (key_len,) = _KEYLEN.unpack(lead)
            key_raw = fh.read(key_len)
            if len(key_raw) != key_len:
                raise TruncatedRecord(f"{path}: record {r}: truncated key")
            key = key_raw.decode("utf-8")
            if not key.startswith(("doc:", "word:")):
                raise BadMagic(
                    f"{path}: record {r}: key {key!r} lacks doc:/word: prefix"
                )
            payload = fh.read(vec_bytes)
            if len(payload) != vec_bytes:
                raise TruncatedRecord(
                    f"{path}: record {r}: expected {dim} float32 values"
                )
            if key in vectors:
                raise ValueError(f"{path}: duplicate key {key!r}")
            vectors[key] = np.frombuffer(payload, dtype="<f4").copy()
        if fh.read(1):
            raise TruncatedRecord(f"{path}: trailing bytes after {count} records")
    return FeatureFile(dimension=dim, vectors=vectors)


def write_feature_file(path, dimension: int, vectors: Mapping[str, np.ndarray]) -> None:
    """Write NFF1; iteration order of ``vectors`` is the record order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(len(vectors), dimension))
        for key, vec in vectors.items():
            if not key.startswith(("doc:", "word:")):
                raise ValueError(f"key {key!r} lacks doc:/word: prefix")
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dimension,):
                raise DimensionMismatch(
                    f"vector for {key!r} has shape {arr.shape}, expected ({dimension},)"
                )
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"key {key!r} too long")
            fh.write(_KEYLEN.pack(len(raw)))
            fh.write(raw)
            fh.write(arr.tobytes())


def min_pool(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise minimum over a nonempty sequence of same-length vectors."""
    if len(vectors) == 0:
        raise EmptyPool("min_pool needs at least one vector")
    arrays = [np.asarray(v) for v in vectors]
    dim = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != dim:
            raise DimensionMismatch(
                f"vector shapes differ: {a.shape} vs {dim}"
            )
    return np.minimum.reduce(arrays)


@dataclass
class NodeFeatureMatrix:
    """Row-per-node float64 feature matrix in graph node order."""

    matrix: np.ndarray

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def assemble_features(
    graph: HeteroTextGraph,
    doc_features: FeatureFile | None = None,
    word_features: FeatureFile | None = None,
) -> NodeFeatureMatrix:
    """Initial node features: external vectors or a one-hot identity.

    External mode requires both files (single-source rule): document rows
    come from ``doc:<id>`` keys, word rows from ``word:<token>`` keys.
    With neither file, features are the N x N identity.
    """
    if (doc_features is None) != (word_features is None):
        raise ValueError(
            "supply both doc and word feature files, or neither for one-hot"
        )
    n = graph.num_nodes
    if doc_features is None:
        return NodeFeatureMatrix(np.eye(n, dtype=np.float64))
    if doc_features.dimension != word_features.dimension:
        raise DimensionMismatch(
            f"doc dimension {doc_features.dimension} != "
            f"word dimension {word_features.dimension}"
        )
    dim = doc_features.dimension
    out = np.empty((n, dim), dtype=np.float64)
    for i, (ntype, key) in enumerate(graph.nodes):
        if ntype == "d":
            full = "doc:" + key
            pool = doc_features.vectors
        else:
            full = "word:" + key
            pool = word_features.vectors
        vec = pool.get(full)
        if vec is None:
            raise MissingKey(full)
        out[i] = vec.astype(np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteInput("feature matrix contains NaN or Inf")
    return NodeFeatureMatrix(out)
