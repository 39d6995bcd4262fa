"""Validity objectives: feature-embedding agreement, multi-view consistency
and course-platform alignment, each a contrastive BCE driven by a bilinear
discriminator with row-shuffle negatives."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import sigmoid, softplus
from .errors import ShapeError


@dataclass
class BilinearDiscriminator:
    """score(x, y) = sigmoid(x^T W y); W has shape (d_left, d_right)."""

    W: np.ndarray
    name: str = ""

    def logits(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        if left.shape[1] != self.W.shape[0] or right.shape[1] != self.W.shape[1]:
            raise ShapeError(f"discriminator {self.name or '?'}: "
                             f"{left.shape} x {self.W.shape} x {right.shape}")
        return np.einsum("ij,ij->i", left @ self.W, right)

    def score(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(left, right))


@dataclass(frozen=True)
class CorruptionPlan:
    """Seeded row permutation used to build negatives."""

    permutation: np.ndarray
    seed: int

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if sorted(perm.tolist()) != list(range(perm.size)):
            raise ValueError("not a permutation of 0..N-1")


def make_corruption_plan(n: int, rng: np.random.Generator, seed: int = 0) -> CorruptionPlan:
    """Random permutation, rejecting the identity for n > 1 (a bounded number
    of redraws, then a cyclic shift, keeps the draw deterministic)."""
    perm = rng.permutation(n)
    if n > 1:
        for _ in range(100):
            if not np.array_equal(perm, np.arange(n)):
                break
            perm = rng.permutation(n)
        else:
            perm = np.roll(np.arange(n), 1)
    return CorruptionPlan(permutation=perm, seed=seed)


def corrupt_rows(T: np.ndarray, plan: CorruptionPlan) -> np.ndarray:
    """Permute rows; the row multiset is preserved."""
    if plan.permutation.size != T.shape[0]:
        raise ShapeError(f"plan length {plan.permutation.size} != rows {T.shape[0]}")
    return T[plan.permutation]


def _pair_bce(logits_pos: np.ndarray, logits_neg: np.ndarray) -> float:
    """Mean over courses of -log sigma(z_pos) - log(1 - sigma(z_neg))."""
    return float(softplus(-logits_pos).mean() + softplus(logits_neg).mean())


def agreement_loss(X: np.ndarray, h: np.ndarray,
                   discs: Sequence[BilinearDiscriminator],
                   plans: Sequence[CorruptionPlan]) -> float:
    """Feature-embedding agreement: per view, positives pair each course's raw
    feature row with its unified embedding, negatives pair a row-shuffled
    feature matrix with the same embedding; summed over views / |views|."""
    if len(discs) != len(plans):
        raise ShapeError("one corruption plan per discriminator required")
    if not discs:
        return 0.0
    total = 0.0
    for disc, plan in zip(discs, plans):
        x_neg = corrupt_rows(X, plan)
        total += _pair_bce(disc.logits(X, h), disc.logits(x_neg, h))
    return total / len(discs)


def consistency_loss(h: np.ndarray, views: Sequence[np.ndarray],
                     disc: BilinearDiscriminator,
                     plans: Sequence[CorruptionPlan]) -> float:
    """Multi-view consistency: positives pair the unified embedding with each
    view's embedding row-wise, negatives shuffle the view rows; one shared
    discriminator; summed over views / |views|."""
    if len(views) != len(plans):
        raise ShapeError("one corruption plan per view required")
    if not views:
        return 0.0
    total = 0.0
    for h_view, plan in zip(views, plans):
        h_neg = corrupt_rows(h_view, plan)
        total += _pair_bce(disc.logits(h, h_view), disc.logits(h, h_neg))
    return total / len(views)


@dataclass
class PlatformSummary:
    """Graph-level vector: sigmoid of the mean course embedding."""

    M: np.ndarray  # (1, k), entries in (0, 1)


def platform_summary(h: np.ndarray) -> PlatformSummary:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ShapeError("platform summary needs a non-empty (N, k) embedding")
    return PlatformSummary(M=sigmoid(h.mean(axis=0, keepdims=True)))


def alignment_loss(h: np.ndarray, summary: PlatformSummary,
                   disc: BilinearDiscriminator, plan: CorruptionPlan) -> float:
    """Course-platform alignment: positives pair each course embedding with
    the platform summary, negatives shuffle the embedding rows."""
    n = h.shape[0]
    if n == 1:
        warnings.warn("alignment loss is degenerate for a single course "
                      "(the only permutation is the identity)")
    M_rows = np.broadcast_to(summary.M, (n, summary.M.shape[1]))
    h_neg = corrupt_rows(h, plan)
    return _pair_bce(disc.logits(h, M_rows), disc.logits(h_neg, M_rows))
