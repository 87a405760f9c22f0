"""Envelope constraints on NMF bases.

Every basis column is split into an all-pole envelope and an excitation
(``w = v * e``). The constraint then blends the column with a version of
itself whose envelope has been swapped for a target:

* informed: the target is an envelope trained from a clip of the instrument;
* blind: the target is the activation-weighted mean envelope of the group the
  basis belongs to.

Constrained columns are not renormalized here; the next iteration's scale
exchange does it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lpc import split_basis
from .nmf import EPS, Partition

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstraintSchedule:
    """Mixing weights for the constraint.

    ``alpha_of(l) = clip(alpha_start + alpha_step * l, 0, 1)`` is the informed
    weight at iteration ``l`` (0-based); 1 keeps the unconstrained basis.
    ``beta`` is the fixed blind weight and ``p`` the exponent on activation
    L1 norms used to weight the group average.
    """

    alpha_start: float = 0.0
    alpha_step: float = 0.01
    beta: float = 0.0
    p: float = 5.0

    def alpha_of(self, iteration: int) -> float:
        return float(np.clip(self.alpha_start + self.alpha_step * iteration, 0.0, 1.0))


def apply_informed(W, true_envelopes: Sequence[np.ndarray], partition: Partition,
                   alpha: float, order: int = 4) -> np.ndarray:
    """Pull each group's bases towards that instrument's trained envelope."""
    W = np.asarray(W, dtype=np.float64)
    F = W.shape[0]
    if len(true_envelopes) != len(partition):
        raise ValueError("need exactly one envelope per partition group")
    for env in true_envelopes:
        if len(env) != F:
            raise ValueError(f"envelope length {len(env)} does not match {F} bins")
    alpha = float(np.clip(alpha, 0.0, 1.0))
    if alpha == 1.0:
        return W.copy()

    split = split_basis(W, order)
    out = np.empty_like(W)
    for env, idx in zip(true_envelopes, partition):
        target = np.asarray(env, dtype=np.float64)[:, None] * split.excitation[:, idx]
        out[:, idx] = alpha * W[:, idx] + (1.0 - alpha) * target
    return np.maximum(out, EPS)


def activation_weights(H, p: float) -> np.ndarray:
    """``||h_k||_1 ** p``, computed relative to the largest norm to avoid overflow."""
    norms = np.abs(H).sum(axis=1)
    top = norms.max() if norms.size else 0.0
    if top <= 0:
        return np.ones_like(norms)
    return (norms / top) ** p


def group_envelopes(envelopes, H, partition: Partition, p: float) -> list:
    """Activation-weighted, L1-normalized mean envelope for each group."""
    out = []
    for idx in partition:
        nu = activation_weights(H[idx], p)
        if not np.any(H[idx]) or not np.any(nu > 0) or not np.all(np.isfinite(nu)):
            logger.warning("group with all-zero activations; using uniform weights")
            nu = np.ones(len(idx))
        mean = envelopes[:, idx] @ nu
        out.append(mean / mean.sum())
    return out


def apply_blind(W, H, partition: Partition, beta: float = 0.0, p: float = 5.0,
                order: int = 4) -> np.ndarray:
    """Give every basis in a group the group's weighted-average envelope."""
    W = np.asarray(W, dtype=np.float64)
    beta = float(np.clip(beta, 0.0, 1.0))
    if beta == 1.0:
        return W.copy()
    split = split_basis(W, order)
    means = group_envelopes(split.envelope, H, partition, p)
    out = np.empty_like(W)
    for mean, idx in zip(means, partition):
        target = mean[:, None] * split.excitation[:, idx]
        out[:, idx] = beta * W[:, idx] + (1.0 - beta) * target
    return np.maximum(out, EPS)
