"""Semantic attention over per-view embeddings.

A shared projection (W, b) and attention vector q score each view by the
mean tanh response over course rows; softmax over the per-view scores
gives the mixing weights for the unified embedding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class AttentionParams:
    """Shared across views: W (k x k'), b (1 x k'), q (k' x 1)."""

    W: np.ndarray
    b: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        k, kp = self.W.shape
        if self.b.shape != (1, kp):
            raise ShapeError(f"bias shape {self.b.shape}, expected (1, {kp})")
        if self.q.shape != (kp, 1):
            raise ShapeError(f"attention vector shape {self.q.shape}, expected ({kp}, 1)")


@dataclass
class ViewWeights:
    """Raw per-view scores and their softmax normalization."""

    raw: np.ndarray
    normalized: np.ndarray


def view_importance(h_tilde: np.ndarray, p: AttentionParams,
                    mode: str = "nodes", n_views: int | None = None) -> float:
    """Scalar importance of one view: mean over course rows of
    tanh(q^T (W^T h_row + b)). Bounded in [-1, 1].

    ``mode='first_rows'`` instead averages only the first ``n_views`` rows
    (the literal reading of the scoring sum); the default averages all rows.
    """
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    if h_tilde.shape[1] != p.W.shape[0]:
        raise ShapeError(f"embedding dim {h_tilde.shape[1]} != W rows {p.W.shape[0]}")
    scores = np.tanh((h_tilde @ p.W + p.b) @ p.q)[:, 0]
    if mode == "nodes":
        return float(scores.mean())
    if mode == "first_rows":
        if not n_views:
            raise ValueError("mode='first_rows' requires n_views")
        return float(scores[:n_views].mean())
    raise ValueError(f"unknown importance mode {mode!r}")


def normalize_weights(a: np.ndarray) -> np.ndarray:
    """Softmax of the raw view scores."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError("raw scores must be finite")
    e = np.exp(a - a.max())
    return e / e.sum()


def fuse(views: list[np.ndarray], alpha: np.ndarray) -> np.ndarray:
    """Convex combination of view embeddings: h = sum_i alpha_i h_i."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if len(views) != alpha.size:
        raise ShapeError(f"{len(views)} views but {alpha.size} weights")
    if not views:
        raise ShapeError("fuse requires at least one view")
    shape = views[0].shape
    for v in views[1:]:
        if v.shape != shape:
            raise ShapeError("all views must share one shape")
    out = np.zeros(shape)
    for w, v in zip(alpha, views):
        out += w * v
    return out


def attention_weights(views: list[np.ndarray], p: AttentionParams,
                      mode: str = "nodes") -> ViewWeights:
    """Raw scores and softmax weights for a list of view embeddings."""
    raw = np.array([view_importance(h, p, mode=mode, n_views=len(views))
                    for h in views])
    return ViewWeights(raw=raw, normalized=normalize_weights(raw))
