"""Seeded C-way K-shot episode sampling.

Random numbers come from numpy's Philox-4x64 counter-based generator seeded
through ``SeedSequence(seed)``, so a given seed yields the same episode on
every platform. The draw order is fixed:

1. choose C distinct labels uniformly from the sorted label list;
2. sort the chosen labels, which assigns episode-local ids 0..C-1;
3. for each chosen label in that order, draw K+Q rows without replacement
   from its rows (in file order); the first K are support, the rest query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rdc.embedding_store import EmbeddingSet
from rdc.errors import InsufficientClasses, InsufficientRowsInClass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class Episode:
    support_rows: np.ndarray
    support_labels: np.ndarray
    query_rows: np.ndarray
    query_true_labels: np.ndarray
    C: int
    K: int
    Q: int

    @property
    def rows(self) -> np.ndarray:
        """Support rows followed by query rows; positions in this array index episode matrices."""
        return np.concatenate([self.support_rows, self.query_rows])

    @property
    def n(self) -> int:
        return self.C * (self.K + self.Q)

    @property
    def n_support(self) -> int:
        return self.C * self.K


def sample_episode(emb: EmbeddingSet, C: int, K: int, Q: int, seed: int) -> Episode:
    if min(C, K, Q) < 1:
        raise ValueError("C, K and Q must be positive")
    labels = sorted(emb.class_index)
    if len(labels) < C:
        raise InsufficientClasses(f"need {C} classes, set has {len(labels)}")
    need = K + Q
    rng = make_rng(seed)
    chosen = sorted(labels[i] for i in rng.choice(len(labels), size=C, replace=False))

    support, query = [], []
    for label in chosen:
        members = emb.class_index[label]
        if len(members) < need:
            raise InsufficientRowsInClass(label, len(members), need)
        picked = members[rng.choice(len(members), size=need, replace=False)]
        support.append(picked[:K])
        query.append(picked[K:])

    local = np.arange(C)
    return Episode(
        support_rows=np.concatenate(support),
        support_labels=np.repeat(local, K),
        query_rows=np.concatenate(query),
        query_true_labels=np.repeat(local, Q),
        C=C,
        K=K,
        Q=Q,
    )
