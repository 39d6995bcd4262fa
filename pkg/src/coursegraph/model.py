"""Tape-based forward pass assembling the full training objective.

Mirrors the numpy reference ops in :mod:`encoder`, :mod:`fusion` and
:mod:`objectives` but routes every step through :class:`~.autodiff.Tape`
so the combined loss is differentiable in all parameters. Edge batches,
corruption plans and the dropout mask are taken as frozen inputs, which
keeps the loss a pure function of the parameters (required both by the
optimizer step and by finite-difference checking).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Node, ParamStore, Tape, glorot_uniform
from .encoder import EdgeSampleBatch
from .errors import ConfigError
from .metapath import ViewGraph
from .objectives import CorruptionPlan


@dataclass
class ModelDims:
    """Static architecture description shared by init and forward."""

    view_labels: list[str]
    d: int
    k: int
    attn_dim: int
    depth: int = 1
    share_view_weights: bool = False
    share_agreement_disc: bool = False
    importance_mean: str = "nodes"  # or "first_rows"

    @property
    def n_views(self) -> int:
        return len(self.view_labels)

    def enc_names(self, label: str) -> list[str]:
        stem = "shared" if self.share_view_weights else label
        return [f"enc/{stem}/W{layer}" for layer in range(self.depth)]

    def agree_name(self, label: str) -> str:
        return "disc/agree/shared" if self.share_agreement_disc else f"disc/agree/{label}"


def init_params(dims: ModelDims, rng: np.random.Generator) -> ParamStore:
    """Glorot-uniform initialization of every trainable tensor."""
    if dims.depth < 1:
        raise ConfigError("encoder depth must be >= 1")
    if dims.n_views < 1:
        raise ConfigError("at least one view is required")
    params = ParamStore()
    for label in dims.view_labels:
        for layer, name in enumerate(dims.enc_names(label)):
            if name in params:
                continue  # shared stack
            rows = dims.d if layer == 0 else dims.k
            params.add(name, glorot_uniform(rng, rows, dims.k))
    params.add("attn/W", glorot_uniform(rng, dims.k, dims.attn_dim))
    params.add("attn/b", glorot_uniform(rng, 1, dims.attn_dim))
    params.add("attn/q", glorot_uniform(rng, dims.attn_dim, 1))
    for label in dims.view_labels:
        name = dims.agree_name(label)
        if name not in params:
            params.add(name, glorot_uniform(rng, dims.d, dims.k))
    params.add("disc/consist", glorot_uniform(rng, dims.k, dims.k))
    params.add("disc/align", glorot_uniform(rng, dims.k, dims.k))
    return params


@dataclass
class StepInputs:
    """Everything randomness-dependent, frozen before the forward pass."""

    batches: list[EdgeSampleBatch]
    plans_agree: list[CorruptionPlan]
    plans_consist: list[CorruptionPlan]
    plan_align: CorruptionPlan
    dropout_mask: np.ndarray | None = None  # (N, d) inverted-scale mask, or None


@dataclass
class LossNodes:
    """Forward-pass outputs; ``.value`` of each node is the current number."""

    l_q: Node
    l_j: Node
    l_s: Node
    l_y: Node
    total: Node
    alpha: Node
    h: Node
    h_views: list[Node]

    def components(self) -> tuple[float, float, float, float]:
        return (float(self.l_q.value[0, 0]), float(self.l_j.value[0, 0]),
                float(self.l_s.value[0, 0]), float(self.l_y.value[0, 0]))


def _pair_logits(tape: Tape, h: Node, pairs: np.ndarray) -> Node:
    left = tape.gather_rows(h, pairs[:, 0])
    right = tape.gather_rows(h, pairs[:, 1])
    return tape.row_sums(tape.hadamard(left, right))


def _bce_pos(tape: Tape, logits: Node) -> Node:
    return tape.mean_all(tape.softplus(tape.scale(logits, -1.0)))


def _bce_neg(tape: Tape, logits: Node) -> Node:
    return tape.mean_all(tape.softplus(logits))


def _bilinear_logits(tape: Tape, left: Node, W: Node, right: Node) -> Node:
    return tape.row_sums(tape.hadamard(tape.matmul(left, W), right))


def _sum_nodes(tape: Tape, nodes: list[Node]) -> Node:
    out = nodes[0]
    for n in nodes[1:]:
        out = tape.add(out, n)
    return out


def forward_losses(params: ParamStore, dims: ModelDims,
                   views: Sequence[ViewGraph], X: np.ndarray,
                   step: StepInputs,
                   weights: tuple[float, float, float, float],
                   tape: Tape) -> LossNodes:
    """Build the combined objective on the tape and return all loss nodes.

    ``weights`` are the four loss multipliers; components are always
    evaluated (for logging), but only weighted ones feed the total, so
    gradients match the weighted objective exactly.
    """
    lam_q, lam_j, lam_s, lam_y = weights
    n_views = len(views)
    if n_views != dims.n_views:
        raise ConfigError(f"model built for {dims.n_views} views, got {n_views}")

    x_enc_arr = X if step.dropout_mask is None else X * step.dropout_mask
    x_enc = tape.constant(x_enc_arr)
    x_raw = tape.constant(X)

    # per-view GCN encoders
    h_views: list[Node] = []
    for view, label in zip(views, dims.view_labels):
        a_hat = tape.constant(view.A_hat)
        h = x_enc
        names = dims.enc_names(label)
        for layer, name in enumerate(names):
            h = tape.matmul(tape.matmul(a_hat, h), tape.param(params[name]))
            if layer < len(names) - 1:
                h = tape.relu(h)
        h_views.append(h)

    # reconstruction
    recon_terms: list[Node] = []
    for h, batch in zip(h_views, step.batches):
        if batch.is_empty:
            continue
        term = _bce_pos(tape, _pair_logits(tape, h, batch.pos))
        if batch.neg.size:
            term = tape.add(term, _bce_neg(tape, _pair_logits(tape, h, batch.neg)))
        recon_terms.append(term)
    if recon_terms:
        l_q = tape.scale(_sum_nodes(tape, recon_terms), 1.0 / n_views)
    else:
        l_q = tape.constant([[0.0]])

    # semantic attention fusion
    w_attn = tape.param(params["attn/W"])
    b_attn = tape.param(params["attn/b"])
    q_attn = tape.param(params["attn/q"])
    raw_scores: list[Node] = []
    for h in h_views:
        proj = tape.matmul(tape.tanh(tape.add_bias(tape.matmul(h, w_attn), b_attn)),
                           q_attn)
        if dims.importance_mean == "first_rows":
            proj = tape.gather_rows(proj, np.arange(min(n_views, proj.value.shape[0])))
        raw_scores.append(tape.mean_all(proj))
    alpha = tape.softmax_vec(tape.concat_cols(raw_scores))
    h_parts = [tape.scalar_mul(h, tape.pick(alpha, 0, i))
               for i, h in enumerate(h_views)]
    h_unified = _sum_nodes(tape, h_parts)

    # feature-embedding agreement
    agree_terms: list[Node] = []
    for label, plan in zip(dims.view_labels, step.plans_agree):
        w_d = tape.param(params[dims.agree_name(label)])
        x_neg = tape.constant(X[plan.permutation])
        term = tape.add(_bce_pos(tape, _bilinear_logits(tape, x_raw, w_d, h_unified)),
                        _bce_neg(tape, _bilinear_logits(tape, x_neg, w_d, h_unified)))
        agree_terms.append(term)
    l_j = tape.scale(_sum_nodes(tape, agree_terms), 1.0 / n_views)

    # multi-view consistency
    w_s = tape.param(params["disc/consist"])
    consist_terms: list[Node] = []
    for h, plan in zip(h_views, step.plans_consist):
        h_neg = tape.gather_rows(h, plan.permutation)
        term = tape.add(_bce_pos(tape, _bilinear_logits(tape, h_unified, w_s, h)),
                        _bce_neg(tape, _bilinear_logits(tape, h_unified, w_s, h_neg)))
        consist_terms.append(term)
    l_s = tape.scale(_sum_nodes(tape, consist_terms), 1.0 / n_views)

    # course-platform alignment
    w_y = tape.param(params["disc/align"])
    summary = tape.transpose(tape.sigmoid(tape.mean_rows(h_unified)))  # (k, 1)
    h_shuf = tape.gather_rows(h_unified, step.plan_align.permutation)
    l_y = tape.add(_bce_pos(tape, tape.matmul(tape.matmul(h_unified, w_y), summary)),
                   _bce_neg(tape, tape.matmul(tape.matmul(h_shuf, w_y), summary)))

    weighted = [tape.scale(node, lam)
                for node, lam in zip((l_q, l_j, l_s, l_y), (lam_q, lam_j, lam_s, lam_y))
                if lam != 0.0]
    total = _sum_nodes(tape, weighted) if weighted else tape.constant([[0.0]])
    return LossNodes(l_q=l_q, l_j=l_j, l_s=l_s, l_y=l_y, total=total,
                     alpha=alpha, h=h_unified, h_views=h_views)
