"""Fine-tuning a linear adapter toward calibrated episode distances.

Frozen episode embeddings X are mapped through Z = X W with W initialised
to the identity. Every epoch recomputes the calibrated target on the
current Z, holds it and the neighbour sets fixed, and takes one gradient
step on the distribution-matching loss between the live l2-normalised
Euclidean distances of Z and the target. All gradients are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rdc.embedding_store import normalize_rows
from rdc.episodes import Episode
from rdc.errors import DivergenceDetected, ShapeMismatch
from rdc.metric import DistanceMatrix, npc_episode, pairwise_euclidean
from rdc.rerank import CalibrationConfig, episode_features, membership_matrix, rdc_calibrate

PROB_FLOOR = 1e-12


@dataclass
class Adapter:
    W: np.ndarray
    learning_rate: float = 0.001

    @classmethod
    def identity(cls, m: int, learning_rate: float = 0.001) -> "Adapter":
        return cls(np.eye(m), learning_rate)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W


@dataclass
class FinetuneResult:
    adapter: Adapter
    losses: list[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``adapter, trace = finetune_episode(...)``
        return iter((self.adapter, self.losses))


def attention_mask(expanded, alpha: float, n: int | None = None) -> np.ndarray:
    """1 + alpha where the column item is in the row item's expanded set, else 1."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    sets = getattr(expanded, "expanded", expanded)
    n = len(sets) if n is None else n
    return np.where(membership_matrix(sets, n), 1.0 + alpha, 1.0)


def _sign(sign: str) -> float:
    if sign in ("paper", "paper_literal"):
        return 1.0
    if sign == "negated":
        return -1.0
    raise ValueError(f"unknown sign {sign!r}")


def soften(D, M: np.ndarray | None, tau: float, sign: str = "paper") -> np.ndarray:
    """Row-wise temperature softmax over the off-diagonal entries of M * D.

    ``sign="paper"`` uses exp(+d / tau); ``"negated"`` uses exp(-d / tau).
    The diagonal of the result is 0.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)
    a = d if M is None else M * d
    logits = _sign(sign) * a / tau
    n = logits.shape[0]
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True) if n > 1 else e


def kl_loss(P_live: np.ndarray, P_target: np.ndarray, tau: float) -> float:
    """tau^2 * KL(target || live), summed over each row and averaged over rows."""
    if P_live.shape != P_target.shape:
        raise ShapeMismatch(f"{P_live.shape} vs {P_target.shape}")
    q = P_target
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, q * (np.log(q) - np.log(np.maximum(P_live, PROB_FLOOR))), 0.0)
    return float(tau**2 * terms.sum(axis=1).mean())


def _offdiag(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def mse_loss(D_live, D_target, M: np.ndarray | None = None) -> float:
    a = D_live.values if isinstance(D_live, DistanceMatrix) else np.asarray(D_live)
    b = D_target.values if isinstance(D_target, DistanceMatrix) else np.asarray(D_target)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if M is not None:
        a, b = M * a, M * b
    return float(((a - b)[_offdiag(a.shape[0])] ** 2).mean())


def loss_and_grad(
    x: np.ndarray,
    W: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    cfg: CalibrationConfig,
) -> tuple[float, np.ndarray]:
    """Loss of the live distances of x @ W against a fixed target, and dLoss/dW."""
    n = x.shape[0]
    z = x @ W
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    u = z / norms
    D = pairwise_euclidean(u, u)

    if cfg.loss == "kl":
        s = _sign(cfg.soften_sign)
        P = soften(D, mask, cfg.tau, cfg.soften_sign)
        Q = soften(target, mask, cfg.tau, cfg.soften_sign)
        loss = kl_loss(P, Q, cfg.tau)
        G = mask * (cfg.tau * s / n) * (P - Q)
    else:
        off = _offdiag(n)
        loss = mse_loss(D, target, mask)
        G = 2.0 * mask * (mask * D - mask * target) / off.sum()
    np.fill_diagonal(G, 0.0)

    # each d_ij is read in row i and row j of the loss
    S = G + G.T
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(D > 0, S / D, 0.0)
    du = u * C.sum(axis=1, keepdims=True) - C @ u
    dz = (du - u * np.sum(u * du, axis=1, keepdims=True)) / norms
    return loss, x.T @ dz


def finetune_episode(features, episode: Episode, cfg: CalibrationConfig) -> FinetuneResult:
    x = episode_features(features, episode)
    m = x.shape[1]
    adapter = Adapter.identity(m, cfg.beta)
    losses: list[float] = []
    mom = np.zeros_like(adapter.W)
    vel = np.zeros_like(adapter.W)
    for epoch in range(cfg.T):
        with np.errstate(over="ignore", invalid="ignore"):
            z = adapter.apply(x)
            norms = np.linalg.norm(z, axis=1)
        if not (np.isfinite(norms).all() and (norms > 0).all()):
            raise DivergenceDetected(epoch)
        res = rdc_calibrate(z, episode, cfg)
        target = res.combined.values.copy()
        if cfg.use_attention:
            mask = attention_mask(res.base.neighbors, cfg.alpha, episode.n)
        else:
            mask = np.ones((episode.n, episode.n))
        loss, grad = loss_and_grad(x, adapter.W, target, mask, cfg)
        if not (np.isfinite(loss) and np.isfinite(grad).all()):
            raise DivergenceDetected(epoch)
        losses.append(loss)
        if cfg.optimizer == "sgd":
            adapter.W = adapter.W - cfg.beta * grad
        else:
            b1, b2, eps = 0.9, 0.999, 1e-8
            mom = b1 * mom + (1 - b1) * grad
            vel = b2 * vel + (1 - b2) * grad**2
            t = epoch + 1
            step = (mom / (1 - b1**t)) / (np.sqrt(vel / (1 - b2**t)) + eps)
            adapter.W = adapter.W - cfg.beta * step
        if not np.isfinite(adapter.W).all():
            raise DivergenceDetected(epoch)
    return FinetuneResult(adapter, losses)


def evaluate_after_finetune(
    features, episode: Episode, adapter: Adapter, normalize: bool = True
) -> np.ndarray:
    """Nearest-prototype predictions on the adapted features of the episode."""
    return npc_episode(adapter.apply(episode_features(features, episode)), episode, normalize)
