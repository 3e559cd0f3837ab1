"""Continuous code embeddings whose geometry mirrors code cross-correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass
class EmbeddingCodebook:
    vectors: np.ndarray  # (C, d)
    kappa: float
    temperature: float = 0.1
    adaptive: bool = False
    stress: float = 0.0

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _pairwise(x):
    diff = x[:, None, :] - x[None, :, :]
    return diff, np.sqrt(np.sum(diff * diff, axis=-1))


def stress(x, target) -> float:
    _, dist = _pairwise(x)
    iu = np.triu_indices(x.shape[0], 1)
    return float(np.sum((dist[iu] - target[iu]) ** 2))


def _stress_and_grad(flat, target, shape, groups, group_weight):
    x = flat.reshape(shape)
    diff, dist = _pairwise(x)
    safe = np.where(dist > 1e-12, dist, 1.0)
    resid = np.where(dist > 1e-12, dist - target, 0.0)
    np.fill_diagonal(resid, 0.0)
    value = 0.5 * np.sum(resid**2)  # each pair counted twice
    coef = 2.0 * resid / safe
    grad = np.sum(coef[:, :, None] * diff, axis=1)
    if groups is not None and group_weight > 0:
        for g in np.unique(groups):
            sel = groups == g
            centred = x[sel] - x[sel].mean(axis=0)
            value += group_weight * np.sum(centred**2)
            grad[sel] += 2.0 * group_weight * centred
    return value, grad.ravel()


def init_embedding_codebook(
    rho,
    dim: int = 16,
    kappa: float | None = None,
    rng: np.random.Generator | None = None,
    temperature: float = 0.1,
    adaptive: bool = False,
    groups=None,
    group_weight: float = 0.0,
    max_iter: int = 2000,
) -> EmbeddingCodebook:
    """Fit code vectors with ||c_i - c_j|| ~ kappa * rho_ij by stress minimization.

    ``kappa`` defaults to the value that makes the largest target distance 1.
    ``groups`` optionally labels codes so same-group vectors are pulled
    together with strength ``group_weight``.
    """
    if not 2 <= dim <= 64:
        raise ValueError(f"embedding dimension {dim} outside [2, 64]")
    rho = np.asarray(rho, dtype=float)
    c = rho.shape[0]
    off = rho.copy()
    np.fill_diagonal(off, 0.0)
    if kappa is None:
        peak = off.max()
        kappa = 1.0 / peak if peak > 0 else 1.0
    target = kappa * off
    rng = rng if rng is not None else np.random.default_rng(0)
    x0 = rng.standard_normal((c, dim)) * (target.max() / np.sqrt(2 * dim) if target.max() > 0 else 0.1)
    if c == 1:
        vecs = np.zeros((1, dim))
    else:
        groups_arr = None if groups is None else np.asarray(groups)
        res = minimize(
            _stress_and_grad, x0.ravel(), args=(target, x0.shape, groups_arr, group_weight),
            jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-10},
        )
        vecs = res.x.reshape(x0.shape)
        vecs -= vecs.mean(axis=0)
    return EmbeddingCodebook(vecs, float(kappa), temperature, adaptive, stress(vecs, target))


def fit_quality(book: EmbeddingCodebook, rho) -> float:
    """Pearson correlation between fitted distances and kappa * rho over code pairs."""
    _, dist = _pairwise(book.vectors)
    iu = np.triu_indices(book.size, 1)
    return float(np.corrcoef(dist[iu], book.kappa * np.asarray(rho)[iu])[0, 1])


def squared_distances(v, vectors) -> np.ndarray:
    """||v_i - c_j||^2 for v of shape (..., d); result (..., C)."""
    v = np.asarray(v, dtype=float)
    diff = v[..., None, :] - vectors
    return np.sum(diff * diff, axis=-1)


def _fast_squared_distances(v, vectors):
    # expanded form; rounding can break exact ties, so only used for losses
    d2 = np.sum(v * v, axis=-1)[..., None] - 2.0 * (v @ vectors.T) + np.sum(vectors * vectors, axis=-1)
    return np.maximum(d2, 0.0)


def hard_quantize(v, vectors) -> np.ndarray:
    """Nearest code per row; exact ties resolve to the lowest index."""
    return np.argmin(squared_distances(v, vectors), axis=-1).astype(np.int64)


def soft_quantize(v, vectors, temperature: float) -> np.ndarray:
    """softmax(-||v - c_j||^2 / temperature) over codes."""
    logits = -squared_distances(v, vectors) / temperature
    logits -= logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def quantization_loss(v, vectors):
    """Mean over devices of the squared distance to the nearest code, with d/dv.

    ``v`` has shape (N, d) or (B, N, d); the loss is averaged over devices
    (and summed over a batch axis if present).
    """
    v = np.asarray(v, dtype=float)
    d2 = _fast_squared_distances(v, vectors)
    idx = np.argmin(d2, axis=-1)
    nearest = vectors[idx]
    n = v.shape[-2]
    loss = np.take_along_axis(d2, idx[..., None], axis=-1)[..., 0].sum(axis=-1) / n
    grad = 2.0 * (v - nearest) / n
    return loss, grad, idx
