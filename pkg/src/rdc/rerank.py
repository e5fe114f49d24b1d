"""k-reciprocal re-ranking and Jaccard distance calibration of episode distances."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from rdc.episodes import Episode
from rdc.errors import DegenerateRow, ShapeMismatch
from rdc.metric import DistanceMatrix, euclidean_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationConfig:
    k: int = 10
    k2: int = 8
    lam: float = 0.5
    p: int = 64
    alpha: float = 0.5
    tau: float = 3.0
    T: int = 20
    beta: float = 0.001
    use_subspace: bool = True
    loss: str = "kl"
    use_attention: bool = True
    qe_plain_knn: bool = False
    soften_sign: str = "paper"
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.k < 1 or self.k2 < 1:
            raise ValueError("k and k2 must be positive")
        if self.k2 >= self.k:
            raise ValueError(f"k2 ({self.k2}) must be smaller than k ({self.k})")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.tau <= 0 or self.beta < 0:
            raise ValueError("tau must be positive and beta non-negative")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.loss not in ("kl", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.soften_sign not in ("paper", "negated"):
            raise ValueError(f"unknown soften sign {self.soften_sign!r}")
        if self.optimizer not in ("sgd", "adaptive-moments"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def with_(self, **changes) -> "CalibrationConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class NeighborSets:
    """Ranked k-NN lists and (once expanded) the k-reciprocal sets of every item.

    ``initial[i]`` is sorted by (distance, index) and never contains ``i``.
    ``clamped`` records that the requested k exceeded n-1.
    """

    initial: tuple[np.ndarray, ...]
    k: int
    clamped: bool = False
    expanded: tuple[frozenset[int], ...] | None = None

    @property
    def n(self) -> int:
        return len(self.initial)


def knn_lists(dist: DistanceMatrix, k: int) -> NeighborSets:
    if k < 1:
        raise ValueError("k must be positive")
    d = dist.values
    n = d.shape[0]
    keff = min(k, n - 1)
    if keff < k:
        log.warning("k=%d exceeds n-1=%d; clamped", k, n - 1)
    lists = []
    for i in range(n):
        # stable sort keeps smaller indices first among equal distances
        order = np.argsort(d[i], kind="stable")
        order = order[order != i]
        lists.append(order[:keff].copy())
    return NeighborSets(tuple(lists), k=k, clamped=keff < k)


def _reciprocal(initial, i: int, size: int) -> set[int]:
    """Members g of i's top-``size`` list that also rank i in their own top-``size``."""
    return {int(g) for g in initial[i][:size] if i in initial[g][:size]}


def expand_reciprocal(neigh: NeighborSets, k: int | None = None) -> NeighborSets:
    k = neigh.k if k is None else k
    initial = neigh.initial
    half = max(1, k // 2)
    core = [_reciprocal(initial, i, k) for i in range(neigh.n)]
    half_sets = [_reciprocal(initial, g, half) for g in range(neigh.n)]

    expanded = []
    for i in range(neigh.n):
        out = set(core[i])
        for g in core[i]:
            cand = half_sets[g]
            if 3 * len(core[i] & cand) >= 2 * len(cand):
                out |= cand
        out.discard(i)
        expanded.append(frozenset(out))
    return replace(neigh, k=k, expanded=tuple(expanded))


def apply_support_labels(neigh: NeighborSets, episode: Episode) -> NeighborSets:
    """Drop cross-class supports from support items' sets and pool same-class supports' sets.

    Support items occupy positions ``0..C*K-1``. Query-anchored sets are left
    untouched because a query's class is unknown.
    """
    before = neigh.expanded
    ns = episode.n_support
    labels = episode.support_labels
    out = list(before)
    for i in range(ns):
        distractors = {s for s in range(ns) if labels[s] != labels[i]}
        merged = set(before[i])
        for s in range(ns):
            if s != i and labels[s] == labels[i]:
                merged |= before[s]
        merged -= distractors
        merged.discard(i)
        out[i] = frozenset(merged)
    return replace(neigh, expanded=tuple(out))


def membership_matrix(sets, n: int) -> np.ndarray:
    mask = np.zeros((n, n), dtype=bool)
    for i, members in enumerate(sets):
        if members:
            mask[i, list(members)] = True
    return mask


def encode(dist: DistanceMatrix, neigh: NeighborSets) -> np.ndarray:
    """Gaussian-kernel encoding exp(-d) restricted to each item's expanded set."""
    if dist.kind != "euclidean":
        raise ValueError(f"encoding needs a euclidean matrix, got {dist.kind}")
    mask = membership_matrix(neigh.expanded, dist.n)
    return np.where(mask, np.exp(-dist.values), 0.0)


def query_expansion(
    V: np.ndarray, dist: DistanceMatrix, k2: int, plain_knn: bool = False
) -> np.ndarray:
    """Replace each encoding row by the mean of the rows of its k2-neighbourhood.

    The neighbourhood is the expanded reciprocal set recomputed at k2, or the
    plain k2-NN list when ``plain_knn``. All rows are read from the
    unexpanded ``V``. An item with an empty neighbourhood keeps its own row.
    """
    neigh = knn_lists(dist, k2)
    if plain_knn:
        groups = [list(map(int, lst)) for lst in neigh.initial]
    else:
        groups = [sorted(s) for s in expand_reciprocal(neigh, k2).expanded]
    out = V.copy()
    for i, members in enumerate(groups):
        if members:
            out[i] = V[members].mean(axis=0)
    return out


def jaccard_matrix(V: np.ndarray, empty: str = "raise") -> DistanceMatrix:
    """Weighted Jaccard distance 1 - sum(min) / sum(max) between encoding rows.

    An all-zero row raises DegenerateRow, or with ``empty="max"`` sits at
    distance 1 from every other item (no shared context at all).
    """
    if empty not in ("raise", "max"):
        raise ValueError(f"unknown empty-row policy {empty!r}")
    V = np.asarray(V, dtype=np.float64)
    zero = ~(V > 0).any(axis=1)
    if zero.any() and empty == "raise":
        raise DegenerateRow(int(np.flatnonzero(zero)[0]))
    lo = np.minimum(V[:, None, :], V[None, :, :]).sum(axis=2)
    hi = np.maximum(V[:, None, :], V[None, :, :]).sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(hi > 0, 1.0 - lo / np.where(hi > 0, hi, 1.0), 1.0)
    np.clip(d, 0.0, 1.0, out=d)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, "jaccard")


def calibrate(D_o: DistanceMatrix, D_J: DistanceMatrix, lam: float) -> DistanceMatrix:
    if D_o.values.shape != D_J.values.shape:
        raise ShapeMismatch(f"{D_o.values.shape} vs {D_J.values.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return DistanceMatrix(lam * D_o.values + (1.0 - lam) * D_J.values, "calibrated")


@dataclass(frozen=True)
class SpaceCalibration:
    """Intermediate products of calibrating one feature space."""

    original: DistanceMatrix
    neighbors: NeighborSets
    jaccard: DistanceMatrix
    calibrated: DistanceMatrix


def calibrate_space(x: np.ndarray, episode: Episode, cfg: CalibrationConfig) -> SpaceCalibration:
    """Run the full calibration chain on the episode feature matrix ``x`` (rows = episode.rows)."""
    D_o = euclidean_matrix(x, normalize=True)
    neigh = expand_reciprocal(knn_lists(D_o, cfg.k))
    neigh = apply_support_labels(neigh, episode)
    V = encode(D_o, neigh)
    V = query_expansion(V, D_o, min(cfg.k2, D_o.n - 1), plain_knn=cfg.qe_plain_knn)
    D_J = jaccard_matrix(V, empty="max")
    return SpaceCalibration(D_o, neigh, D_J, calibrate(D_o, D_J, cfg.lam))


@dataclass(frozen=True)
class RDCResult:
    base: SpaceCalibration
    sub: SpaceCalibration | None
    combined: DistanceMatrix


def rdc_calibrate(x: np.ndarray, episode: Episode, cfg: CalibrationConfig) -> RDCResult:
    from rdc.subspace import build_subspace, project

    base = calibrate_space(x, episode, cfg)
    if not cfg.use_subspace:
        return RDCResult(base, None, base.calibrated)
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    p = min(cfg.p, x.shape[1])
    sub = calibrate_space(project(xn, build_subspace(xn, p)), episode, cfg)
    combined = 0.5 * (base.calibrated.values + sub.calibrated.values)
    return RDCResult(base, sub, DistanceMatrix(combined, "combined"))


def episode_features(features, episode: Episode) -> np.ndarray:
    return np.asarray(features, dtype=np.float64)[episode.rows]


def rdc_pipeline(features, episode: Episode, cfg: CalibrationConfig) -> DistanceMatrix:
    """Calibrated (or, with the subspace branch, combined) distances over episode.rows."""
    return rdc_calibrate(episode_features(features, episode), episode, cfg).combined
