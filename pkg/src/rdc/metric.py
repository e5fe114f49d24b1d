"""Pairwise distances and the nearest-prototype classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rdc.embedding_store import normalize_rows
from rdc.episodes import Episode
from rdc.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    MissingRow,
    NonFiniteValue,
)

KINDS = ("euclidean", "jaccard", "calibrated", "combined")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}")
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"distance matrix must be square, got {v.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Prototypes:
    vectors: np.ndarray
    class_ids: np.ndarray


def pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """True Euclidean distances between rows of ``a`` and rows of ``b``.

    Computed from explicit differences rather than the Gram expansion so the
    result is exactly symmetric with an exactly zero diagonal when a is b.
    """
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _check_finite(x: np.ndarray) -> None:
    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        raise NonFiniteValue(int(np.flatnonzero(bad)[0]))


def euclidean_matrix(features, normalize: bool = True) -> DistanceMatrix:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two feature rows")
    _check_finite(x)
    if normalize:
        x = normalize_rows(x)
    return DistanceMatrix(pairwise_euclidean(x, x), "euclidean")


def compute_prototypes(episode: Episode, features) -> Prototypes:
    """Class-mean of the support vectors; ``features`` is indexed by episode.support_rows."""
    x = np.asarray(features, dtype=np.float64)
    rows = episode.support_rows
    if rows.size and (rows.min() < 0 or rows.max() >= x.shape[0]):
        raise MissingRow(f"support row out of range for {x.shape[0]} feature rows")
    ids = np.arange(episode.C)
    protos = np.stack(
        [x[rows[episode.support_labels == c]].mean(axis=0) for c in ids]
    )
    return Prototypes(protos, ids)


def npc_classify(queries, prototypes: Prototypes, distance: str = "euclidean") -> np.ndarray:
    if distance != "euclidean":
        raise ValueError(f"unsupported distance {distance!r}")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != prototypes.vectors.shape[1]:
        raise DimensionMismatch(
            f"query dim {q.shape[1]} != prototype dim {prototypes.vectors.shape[1]}"
        )
    d = pairwise_euclidean(q, prototypes.vectors)
    # argmin returns the first minimum, i.e. the smallest class id on ties
    return prototypes.class_ids[np.argmin(d, axis=1)]


def npc_classify_from_matrix(dist: DistanceMatrix, episode: Episode) -> np.ndarray:
    """Classify queries from a pairwise matrix over ``episode.rows`` positions.

    The per-class score of a query is its mean distance to that class's
    support items; with K=1 this is the nearest support item.
    """
    ns = episode.n_support
    if dist.n < episode.n:
        raise IndexOutOfRange(f"matrix covers {dist.n} items, episode has {episode.n}")
    block = dist.values[ns : episode.n, :ns]
    scores = np.stack(
        [block[:, episode.support_labels == c].mean(axis=1) for c in range(episode.C)],
        axis=1,
    )
    return np.argmin(scores, axis=1)


def npc_episode(x_ep, episode: Episode, normalize: bool = False) -> np.ndarray:
    """NPC predictions for features already ordered as ``episode.rows``."""
    x = np.asarray(x_ep, dtype=np.float64)
    if normalize:
        x = normalize_rows(x)
    ns = episode.n_support
    protos = np.stack(
        [x[:ns][episode.support_labels == c].mean(axis=0) for c in range(episode.C)]
    )
    return npc_classify(x[ns : episode.n], Prototypes(protos, np.arange(episode.C)))
