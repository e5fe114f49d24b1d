"""Labelled embedding collections and their on-disk formats.

Two formats are supported:

* CSV with header ``id,label,f0,f1,...,f{m-1}``, one embedding per row.
* Packed binary: magic ``RDCE``, u32 version (=1), u32 n, u32 m, then n
  records of (u32 id length, utf-8 id bytes, i64 label, m x f32), all
  little-endian.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from rdc.errors import (
    DuplicateId,
    EmptyClass,
    MalformedHeader,
    NonFiniteValue,
    RDCError,
    ZeroVector,
)

MAGIC = b"RDCE"
VERSION = 1
_HEAD = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable n x m feature matrix with integer labels and unique string ids."""

    vectors: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]
    class_index: Mapping[int, np.ndarray] = field(init=False, repr=False)

    def __init__(
        self,
        vectors,
        labels,
        ids: Iterable[str],
        classes: Iterable[int] | None = None,
    ):
        vectors = np.array(vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2:
            raise MalformedHeader(f"vectors must be 2-d, got shape {vectors.shape}")
        labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
        ids = tuple(str(i) for i in ids)
        n, m = vectors.shape
        if m < 1:
            raise MalformedHeader("feature dimension must be positive")
        if labels.shape[0] != n or len(ids) != n:
            raise MalformedHeader(
                f"{n} vector rows but {labels.shape[0]} labels and {len(ids)} ids"
            )
        bad = ~np.isfinite(vectors).all(axis=1)
        if bad.any():
            raise NonFiniteValue(int(np.flatnonzero(bad)[0]))
        if (labels < 0).any():
            raise RDCError(f"negative label in row {int(np.flatnonzero(labels < 0)[0])}")
        seen: set[str] = set()
        for ident in ids:
            if ident in seen:
                raise DuplicateId(ident)
            seen.add(ident)

        index: dict[int, np.ndarray] = {}
        for label in np.unique(labels):
            index[int(label)] = np.flatnonzero(labels == label)
        if classes is not None:
            for label in classes:
                if int(label) not in index:
                    raise EmptyClass(int(label))

        for arr in (vectors, labels, *index.values()):
            arr.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "class_index", MappingProxyType(index))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    return EmbeddingSet(normalize_rows(emb.vectors), emb.labels, emb.ids)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm; zero rows are rejected."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0
    if zero.any():
        raise ZeroVector(int(np.flatnonzero(zero)[0]))
    return x / norms[:, None]


def _detect_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "packed-binary" if head == MAGIC else "csv"


def load_embeddings(path, format: str | None = None) -> EmbeddingSet:
    path = Path(path)
    fmt = format or _detect_format(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt in ("packed-binary", "bin"):
        return _load_packed(path)
    raise ValueError(f"unknown embedding format {fmt!r}")


def save_embeddings(emb: EmbeddingSet, path, format: str = "packed-binary") -> None:
    path = Path(path)
    if format == "csv":
        _save_csv(emb, path)
    elif format in ("packed-binary", "bin"):
        _save_packed(emb, path)
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def _load_csv(path: Path) -> EmbeddingSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeader("empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["id", "label"] or len(header) < 3:
            raise MalformedHeader(f"expected header id,label,f0,..., got {header[:3]}")
        m = len(header) - 2
        if header[2:] != [f"f{j}" for j in range(m)]:
            raise MalformedHeader("feature columns must be named f0..f{m-1} in order")
        ids, labels, rows = [], [], []
        for lineno, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != m + 2:
                raise MalformedHeader(
                    f"row {lineno} has {len(rec) - 2} features, header declares {m}"
                )
            ids.append(rec[0])
            try:
                labels.append(int(rec[1]))
                values = [float(v) for v in rec[2:]]
            except ValueError as exc:
                raise MalformedHeader(f"row {lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise NonFiniteValue(lineno)
            rows.append(values)
    if not rows:
        raise MalformedHeader("no embedding rows")
    return EmbeddingSet(np.array(rows), labels, ids)


def _save_csv(emb: EmbeddingSet, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *(f"f{j}" for j in range(emb.dim))])
        for ident, label, row in zip(emb.ids, emb.labels, emb.vectors):
            w.writerow([ident, int(label), *(repr(float(v)) for v in row)])


def _load_packed(path: Path) -> EmbeddingSet:
    data = path.read_bytes()
    if len(data) < _HEAD.size:
        raise MalformedHeader("file shorter than header")
    magic, version, n, m = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeader(f"unsupported version {version}")
    if m == 0:
        raise MalformedHeader("feature dimension must be positive")
    off = _HEAD.size
    ids, labels = [], np.empty(n, dtype=np.int64)
    vectors = np.empty((n, m), dtype=np.float32)
    rec_bytes = 4 * m
    try:
        for i in range(n):
            (idlen,) = _U32.unpack_from(data, off)
            off += 4
            raw = data[off : off + idlen]
            if len(raw) != idlen:
                raise struct.error("truncated id")
            ids.append(raw.decode("utf-8"))
            off += idlen
            (labels[i],) = _I64.unpack_from(data, off)
            off += 8
            if off + rec_bytes > len(data):
                raise struct.error("truncated vector")
            vectors[i] = np.frombuffer(data, dtype="<f4", count=m, offset=off)
            off += rec_bytes
    except struct.error as exc:
        raise MalformedHeader(f"payload does not match n={n}, m={m}: {exc}") from None
    if off != len(data):
        raise MalformedHeader(f"{len(data) - off} trailing bytes after {n} records")
    bad = ~np.isfinite(vectors).all(axis=1)
    if bad.any():
        raise NonFiniteValue(int(np.flatnonzero(bad)[0]))
    return EmbeddingSet(vectors.astype(np.float64), labels, ids)


def _save_packed(emb: EmbeddingSet, path: Path) -> None:
    parts = [_HEAD.pack(MAGIC, VERSION, emb.n, emb.dim)]
    vecs = emb.vectors.astype("<f4")
    for ident, label, row in zip(emb.ids, emb.labels, vecs):
        raw = ident.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _I64.pack(int(label)), row.tobytes()]
    path.write_bytes(b"".join(parts))
