"""Per-view graph autoencoder: GCN encoding, inner-product decoding,
edge sampling and the reconstruction objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import sigmoid, softplus
from .errors import ShapeError
from .metapath import ViewGraph

LN2 = float(np.log(2.0))


@dataclass
class ViewEncoder:
    """Weight stack for one view; single linear layer by default, ReLU
    between layers when depth > 1."""

    weights: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.weights)


def encode(view: ViewGraph, X: np.ndarray, enc: ViewEncoder) -> np.ndarray:
    """Propagate features through the normalized adjacency:
    h = A_hat X W (depth 1), with ReLU between stacked layers."""
    h = np.asarray(X, dtype=np.float64)
    if view.A_hat.shape[1] != h.shape[0]:
        raise ShapeError(f"A_hat {view.A_hat.shape} does not match X {h.shape}")
    for layer, W in enumerate(enc.weights):
        if h.shape[1] != W.shape[0]:
            raise ShapeError(f"layer {layer}: X cols {h.shape[1]} != W rows {W.shape[0]}")
        h = view.A_hat @ h @ W
        if layer < len(enc.weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def decode_logits(h: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Inner products <h_i, h_j> for an array of (i, j) pairs."""
    pairs = np.asarray(pairs, dtype=np.intp)
    if pairs.size == 0:
        return np.zeros(0)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ShapeError(f"pairs must be (m, 2), got {pairs.shape}")
    if pairs.min() < 0 or pairs.max() >= h.shape[0]:
        raise ShapeError("pair index out of range")
    return np.einsum("ij,ij->i", h[pairs[:, 0]], h[pairs[:, 1]])


def decode_pairs(h: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Edge probabilities sigmoid(<h_i, h_j>) for sampled pairs only;
    the full N x N product is never materialized."""
    return sigmoid(decode_logits(h, pairs))


@dataclass
class EdgeSampleBatch:
    """Sampled positive (linked) and negative (unlinked) course pairs, 1:1."""

    pos: np.ndarray  # (m, 2) int
    neg: np.ndarray  # (m', 2) int, m' <= m (fewer when non-edges run out)

    @property
    def is_empty(self) -> bool:
        return self.pos.size == 0


def _empty_batch() -> EdgeSampleBatch:
    return EdgeSampleBatch(pos=np.zeros((0, 2), dtype=np.intp),
                           neg=np.zeros((0, 2), dtype=np.intp))


def sample_edges(view: ViewGraph, rng: np.random.Generator,
                 max_pos: int) -> EdgeSampleBatch:
    """Uniform sample (without replacement) of up to ``max_pos`` edges plus an
    equal number of distinct non-edges. Degenerate views (no edges, or no
    non-edges) yield shorter or empty lists."""
    n = view.A.shape[0]
    ii, jj = np.nonzero(np.triu(view.A, k=1))
    n_pos_all = ii.size
    if n_pos_all == 0:
        return _empty_batch()
    take = min(max_pos, n_pos_all)
    chosen = rng.choice(n_pos_all, size=take, replace=False)
    pos = np.stack([ii[chosen], jj[chosen]], axis=1).astype(np.intp)

    n_pairs = n * (n - 1) // 2
    n_neg_all = n_pairs - n_pos_all
    need = min(take, n_neg_all)
    if need == 0:
        return EdgeSampleBatch(pos=pos, neg=np.zeros((0, 2), dtype=np.intp))
    if n_neg_all <= 4 * need:
        # few non-edges: enumerate instead of rejection sampling
        ui, uj = np.nonzero(np.triu(np.ones((n, n)), k=1) - np.triu(view.A, k=1))
        chosen = rng.choice(ui.size, size=need, replace=False)
        neg = np.stack([ui[chosen], uj[chosen]], axis=1).astype(np.intp)
        return EdgeSampleBatch(pos=pos, neg=neg)
    picked: set[tuple[int, int]] = set()
    neg_list: list[tuple[int, int]] = []
    while len(neg_list) < need:
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        if i == j:
            continue
        if i > j:
            i, j = j, i
        if view.A[i, j] != 0 or (i, j) in picked:
            continue
        picked.add((i, j))
        neg_list.append((i, j))
    return EdgeSampleBatch(pos=pos, neg=np.asarray(neg_list, dtype=np.intp))


def recon_loss(h: np.ndarray, batch: EdgeSampleBatch) -> float:
    """Per-view reconstruction BCE: mean -log sigmoid(<.,.>) over positives
    plus mean -log(1 - sigmoid(<.,.>)) over negatives (stable softplus form)."""
    if batch.is_empty:
        return 0.0
    z_pos = decode_logits(h, batch.pos)
    total = float(softplus(-z_pos).mean())
    if batch.neg.size:
        z_neg = decode_logits(h, batch.neg)
        total += float(softplus(z_neg).mean())
    return total


def recon_loss_multi(hs: list[np.ndarray], batches: list[EdgeSampleBatch]) -> float:
    """Reconstruction loss summed over views and divided by the view count."""
    if len(hs) != len(batches):
        raise ShapeError("one batch per view required")
    if not hs:
        return 0.0
    return sum(recon_loss(h, b) for h, b in zip(hs, batches)) / len(hs)
