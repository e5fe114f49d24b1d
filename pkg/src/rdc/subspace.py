"""Task-adaptive non-linear subspace from the tanh feature kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rdc.errors import NonFiniteValue, ShapeMismatch


@dataclass(frozen=True)
class SubspaceProjection:
    P: np.ndarray
    eigenvalues: np.ndarray

    @property
    def p(self) -> int:
        return self.P.shape[1]


def tanh_kernel(x: np.ndarray) -> np.ndarray:
    """m x m kernel tanh(X^T X); exactly symmetric."""
    g = x.T @ x
    g = 0.5 * (g + g.T)
    return np.tanh(g)


def build_subspace(features, p: int) -> SubspaceProjection:
    """Top-p left singular vectors of tanh(X^T X).

    Column signs are fixed so each column's largest-magnitude entry is
    positive; distances computed in the subspace do not depend on this.
    """
    x = np.asarray(features, dtype=np.float64)
    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        raise NonFiniteValue(int(np.flatnonzero(bad)[0]))
    m = x.shape[1]
    if not 1 <= p <= m:
        raise ValueError(f"p must lie in [1, {m}], got {p}")
    U, s, _ = np.linalg.svd(tanh_kernel(x))
    P = U[:, :p].copy()
    pivot = np.argmax(np.abs(P), axis=0)
    P *= np.sign(P[pivot, np.arange(p)])
    return SubspaceProjection(P, s[:p].copy())


def project(features, proj: SubspaceProjection) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != proj.P.shape[0]:
        raise ShapeMismatch(f"features have {x.shape[-1]} columns, projection expects {proj.P.shape[0]}")
    return x @ proj.P
