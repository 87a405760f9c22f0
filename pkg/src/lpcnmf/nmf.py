"""KL-divergence NMF with multiplicative updates.

One iteration runs, in order: activation update with the current bases,
basis update with the new activations, then the scale exchange that moves the
basis column sums into the activations and leaves every basis column with unit
L1 norm. Envelope constraints (see :mod:`lpcnmf.constraint`) are applied after
that, from outside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

EPS = 1e-12


class Partition:
    """Disjoint index groups assigning basis columns to instruments."""

    def __init__(self, groups: Sequence[Sequence[int]]):
        self.groups = [np.asarray(sorted(g), dtype=int) for g in groups]
        if not self.groups or any(len(g) == 0 for g in self.groups):
            raise ValueError("partition groups must be nonempty")
        flat = np.concatenate(self.groups)
        K = len(flat)
        if len(np.unique(flat)) != K or flat.min() != 0 or flat.max() != K - 1:
            raise ValueError("partition groups must be disjoint and cover 0..K-1")
        self.n_bases = K

    @classmethod
    def contiguous(cls, n_groups: int, per_group: int) -> "Partition":
        return cls([range(i * per_group, (i + 1) * per_group) for i in range(n_groups)])

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __repr__(self):
        return f"Partition(sizes={[len(g) for g in self.groups]})"


def init_bases(F: int, K: int, mode: str = "normal", seed=None) -> np.ndarray:
    """Random column-normalized bases.

    ``normal`` draws i.i.d. uniform(0, 1) entries; ``sparse`` squares them,
    which pushes the columns towards sparser shapes.
    """
    if F <= 0 or K <= 0:
        raise ValueError("F and K must be positive")
    rng = np.random.default_rng(seed)
    W = rng.random((F, K))
    if mode == "sparse":
        W = W ** 2
    elif mode != "normal":
        raise ValueError(f"unknown init mode {mode!r}")
    W = np.maximum(W, EPS)
    return W / W.sum(axis=0)


def init_activations(X, K: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    H = rng.random((K, X.shape[1])) + EPS
    # match the total mass of X for unit-norm bases
    return H * (X.sum() / max(H.sum(), EPS))


def reconstruct(W, H) -> np.ndarray:
    return np.maximum(W @ H, EPS)


def update_activations(X, W, H) -> np.ndarray:
    ratio = X / reconstruct(W, H)
    Hn = H * (W.T @ ratio) / np.maximum(W.sum(axis=0), EPS)[:, None]
    return np.maximum(Hn, EPS)


def update_bases(X, W, H) -> np.ndarray:
    ratio = X / reconstruct(W, H)
    Wn = W * (ratio @ H.T) / np.maximum(H.sum(axis=1), EPS)[None, :]
    return np.maximum(Wn, EPS)


def renormalize(W, H):
    """Move basis column sums into the activation rows.

    Returns ``(W / s, H * s[:, None])`` with ``s`` the column sums, so the
    product is unchanged. A column with zero sum is reset to flat and its
    activation row zeroed.
    """
    s = W.sum(axis=0)
    dead = s <= 0
    if np.any(dead):
        logger.warning("renormalize: %d zero basis column(s) reset", int(dead.sum()))
        W = W.copy()
        H = H.copy()
        W[:, dead] = 1.0 / W.shape[0]
        H[dead] = 0.0
        s = np.where(dead, 1.0, s)
    return W / s, H * s[:, None]


def kl_divergence(X, Xhat) -> float:
    """Generalized KL divergence ``sum(X log(X / Xhat) - X + Xhat)``."""
    X = np.asarray(X, dtype=np.float64)
    Xhat = np.maximum(np.asarray(Xhat, dtype=np.float64), EPS)
    pos = X > 0
    d = np.sum(Xhat) - np.sum(X)
    d += np.sum(X[pos] * np.log(X[pos] / Xhat[pos]))
    return float(d)


@dataclass
class NmfState:
    W: np.ndarray
    H: np.ndarray
    divergence: list


def iterate(X, W, H) -> tuple:
    """One unconstrained iteration; returns the normalized ``(W, H)``."""
    Hn = update_activations(X, W, H)
    Wn = update_bases(X, W, Hn)
    Wn, Hn = renormalize(Wn, Hn)
    return np.maximum(Wn, EPS), Hn


def factorize(X, W, H, n_iter: int = 100,
              constraint: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None,
              callback=None) -> NmfState:
    """Run ``n_iter`` iterations, applying ``constraint(l, W, H) -> W`` after each.

    The divergence between ``X`` and the current product is recorded once per
    iteration, after the constraint.
    """
    X = np.asarray(X, dtype=np.float64)
    trace = []
    for it in range(n_iter):
        W, H = iterate(X, W, H)
        if constraint is not None:
            W = np.maximum(constraint(it, W, H), EPS)
        trace.append(kl_divergence(X, W @ H))
        if callback is not None:
            callback(it, W, H)
    return NmfState(W, H, trace)


def hoyer_sparsity(v) -> np.ndarray:
    """Hoyer sparsity of each column, in [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    l1 = np.abs(v).sum(axis=0)
    l2 = np.sqrt((v ** 2).sum(axis=0))
    return (np.sqrt(n) - l1 / l2) / (np.sqrt(n) - 1)
